//! Oracles shared by the integration suites.
#![allow(dead_code)]

use radkit::contrastive::{composite_loss, loss_gradients, ContrastiveConfig, EmbeddingBatch, NegativesVariant};
use radkit::encoder::{backward, forward, EncoderParams, EncoderShape, Real};
use radkit::eval::{Detection, GroundTruth};
use radkit::{RngStream, RotatedBox};

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor at 1% of the gradient's largest component:
/// central differences carry about `ε·|L|/h` of rounding noise, which no
/// coordinate far below the gradient's scale can resolve relatively.
pub fn rel_err(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-2 * scale).max(1e-12);
    (analytic - numeric).abs() / denom
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n, scale))
        .fold(0.0, f64::max)
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

pub fn unit_rows(n: usize, dim: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// One randomized gradient-check case.
#[derive(Clone, Debug)]
pub struct GradCase {
    pub batch: usize,
    pub shape: EncoderShape,
    pub contrastive: ContrastiveConfig,
    pub seed: u64,
}

pub fn grad_cases(count: usize) -> Vec<GradCase> {
    let batches = [2, 4, 8];
    (0..count)
        .map(|i| {
            let mut rng = RngStream::new(0xF1D0 + i as u64, 0);
            let input = 6 + rng.below(10) as usize;
            let hidden = 3 + rng.below(8) as usize;
            let feat = 3 + rng.below(6) as usize;
            let embed = 2 + rng.below(6) as usize;
            let head_hidden: Vec<usize> = if i % 2 == 0 {
                vec![3 + rng.below(5) as usize]
            } else {
                vec![]
            };
            let mut head = vec![feat];
            head.extend(head_hidden);
            head.push(embed);
            GradCase {
                batch: batches[i % 3],
                shape: EncoderShape {
                    backbone: vec![input, hidden, feat],
                    head,
                },
                contrastive: ContrastiveConfig {
                    temperature: [0.1, 0.2, 0.5, 1.0][i % 4],
                    lambda_cross: [0.0, 0.5, 1.0, 2.0][(i / 2) % 4],
                    symmetric_cross: i % 5 == 0,
                    negatives_variant: if i % 7 == 3 {
                        NegativesVariant::SameView
                    } else {
                        NegativesVariant::OtherView
                    },
                },
                seed: i as u64,
            }
        })
        .collect()
}

pub struct GradFixture {
    pub params: EncoderParams<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub vision: Vec<Vec<f64>>,
    pub contrastive: ContrastiveConfig,
    pub batch: usize,
}

impl GradFixture {
    pub fn new(case: &GradCase) -> Self {
        let mut rng = RngStream::new(case.seed, 99);
        let params = EncoderParams::init(&case.shape, &mut rng).unwrap();
        // Nonzero biases so every parameter has a generic gradient.
        let mut params = params;
        for buf in params.buffers_mut() {
            for v in buf.iter_mut() {
                *v += 0.05 * rng.normal();
            }
        }
        let d = case.shape.input_dim();
        let inputs = (0..2 * case.batch)
            .map(|_| (0..d).map(|_| rng.uniform(0.0, 2.0)).collect())
            .collect();
        let vision = unit_rows(case.batch, case.shape.embed_dim(), &mut rng);
        Self {
            params,
            inputs,
            vision,
            contrastive: case.contrastive.clone(),
            batch: case.batch,
        }
    }

    fn embed<T: Real>(&self, params: &EncoderParams<T>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let z: Vec<Vec<f64>> = self
            .inputs
            .iter()
            .map(|x| {
                let xt: Vec<T> = x.iter().map(|v| T::of(*v)).collect();
                forward(params, &xt)
                    .unwrap()
                    .projected
                    .iter()
                    .map(|v| v.as_f64())
                    .collect()
            })
            .collect();
        let (a, b) = z.split_at(self.batch);
        (a.to_vec(), b.to_vec())
    }

    /// Composite loss as a function of the parameters, in double precision.
    pub fn loss(&self, params: &EncoderParams<f64>) -> f64 {
        let (z, zp) = self.embed(params);
        let batch = EmbeddingBatch::unchecked(z, zp, Some(self.vision.clone())).unwrap();
        composite_loss(&batch, &self.contrastive).unwrap()
    }

    /// Analytic parameter gradient, flattened in buffer order.
    pub fn analytic<T: Real>(&self, params: &EncoderParams<T>) -> Vec<f64> {
        let (z, zp) = self.embed(params);
        let batch = EmbeddingBatch::unchecked(z, zp, Some(self.vision.clone())).unwrap();
        let g = loss_gradients(&batch, &self.contrastive).unwrap();
        let upstream: Vec<Vec<T>> =
            g.z.iter()
                .chain(&g.z_prime)
                .map(|r| r.iter().map(|v| T::of(*v)).collect())
                .collect();
        let inputs: Vec<Vec<T>> = self
            .inputs
            .iter()
            .map(|x| x.iter().map(|v| T::of(*v)).collect())
            .collect();
        let in_refs: Vec<&[T]> = inputs.iter().map(Vec::as_slice).collect();
        let up_refs: Vec<&[T]> = upstream.iter().map(Vec::as_slice).collect();
        let grads = backward(params, &in_refs, &up_refs).unwrap();
        grads.buffers().flat_map(|b| b.iter().map(|v| v.as_f64())).collect()
    }

    pub fn numeric(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut probe = self.params.clone();
        let lens: Vec<usize> = self.params.buffers().map(<[f64]>::len).collect();
        for (b, len) in lens.into_iter().enumerate() {
            for j in 0..len {
                let base = self.params.buffers().nth(b).unwrap()[j];
                let d = central_diff(
                    |v| {
                        probe.buffers_mut().nth(b).unwrap()[j] = v;
                        self.loss(&probe)
                    },
                    base,
                );
                probe.buffers_mut().nth(b).unwrap()[j] = base;
                out.push(d);
            }
        }
        out
    }
}

/// Gradient of the composite loss with respect to the embeddings only.
pub fn embedding_grad_error(case: &GradCase) -> f64 {
    let mut rng = RngStream::new(case.seed, 7);
    let dim = case.shape.embed_dim();
    let z = unit_rows(case.batch, dim, &mut rng);
    let zp = unit_rows(case.batch, dim, &mut rng);
    let zv = unit_rows(case.batch, dim, &mut rng);
    let batch = EmbeddingBatch::new(z.clone(), zp.clone(), Some(zv.clone())).unwrap();
    let g = loss_gradients(&batch, &case.contrastive).unwrap();
    let analytic: Vec<f64> = g.z.iter().chain(&g.z_prime).flatten().copied().collect();
    let mut numeric = Vec::new();
    for side in 0..2 {
        for i in 0..case.batch {
            for k in 0..dim {
                let f = |v: f64| {
                    let (mut a, mut b) = (z.clone(), zp.clone());
                    if side == 0 {
                        a[i][k] = v;
                    } else {
                        b[i][k] = v;
                    }
                    let batch = EmbeddingBatch::unchecked(a, b, Some(zv.clone())).unwrap();
                    composite_loss(&batch, &case.contrastive).unwrap()
                };
                let base = if side == 0 { z[i][k] } else { zp[i][k] };
                numeric.push(central_diff(f, base));
            }
        }
    }
    max_rel_err(&analytic, &numeric)
}

/// Monte-Carlo intersection over union with jittered stratified sampling:
/// the bounding rectangle of both boxes is cut into a `side × side` grid and
/// one uniform point is drawn per cell, classified by half-plane tests.
pub fn monte_carlo_iou(a: &RotatedBox, b: &RotatedBox, side: usize, rng: &mut RngStream) -> f64 {
    // heading (sin, cos), normal (cos, -sin)
    let frame = |bx: &RotatedBox| {
        let (s, c) = bx.yaw.sin_cos();
        (bx.cx, bx.cy, s, c, bx.length / 2.0, bx.width / 2.0)
    };
    let inside = |(cx, cy, s, c, hl, hw): (f64, f64, f64, f64, f64, f64), x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        (dx * s + dy * c).abs() <= hl && (dx * c - dy * s).abs() <= hw
    };
    let (fa, fb) = (frame(a), frame(b));
    let corners: Vec<(f64, f64)> = a.corners().into_iter().chain(b.corners()).collect();
    let x0 = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let x1 = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let y0 = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let y1 = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (dx, dy) = ((x1 - x0) / side as f64, (y1 - y0) / side as f64);
    let (mut both, mut either) = (0usize, 0usize);
    for i in 0..side {
        for j in 0..side {
            let x = x0 + (i as f64 + rng.next_f64()) * dx;
            let y = y0 + (j as f64 + rng.next_f64()) * dy;
            let (ia, ib) = (inside(fa, x, y), inside(fb, x, y));
            both += usize::from(ia && ib);
            either += usize::from(ia || ib);
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

pub fn random_box_pair(rng: &mut RngStream) -> (RotatedBox, RotatedBox) {
    let a = RotatedBox::new(
        rng.uniform(-5.0, 5.0),
        rng.uniform(5.0, 15.0),
        rng.uniform(1.0, 5.0),
        rng.uniform(0.5, 3.0),
        rng.uniform(-std::f64::consts::PI, std::f64::consts::PI),
    );
    let b = RotatedBox::new(
        a.cx + rng.uniform(-3.0, 3.0),
        a.cy + rng.uniform(-3.0, 3.0),
        rng.uniform(1.0, 5.0),
        rng.uniform(0.5, 3.0),
        rng.uniform(-std::f64::consts::PI, std::f64::consts::PI),
    );
    (a, b)
}

/// Brute-force AP: given the true/false outcome of each detection already
/// in score order, tabulate precision and recall after every prefix and
/// take, at each recall level r = i/100, the best precision over all
/// prefixes reaching recall ≥ r.
pub fn brute_force_ap(outcomes_in_score_order: &[bool], num_gt: usize) -> f64 {
    let mut table = Vec::new();
    for len in 1..=outcomes_in_score_order.len() {
        let prefix = &outcomes_in_score_order[..len];
        let tp = prefix.iter().filter(|t| **t).count();
        table.push((tp as f64 / len as f64, tp as f64 / num_gt as f64));
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let mut best = 0.0f64;
        for &(p, rec) in &table {
            if rec >= r && p > best {
                best = p;
            }
        }
        total += best;
    }
    total / 101.0
}

/// Detections whose match against a single unit-square ground truth per
/// frame is fixed by construction: a hit sits on its ground truth, a miss
/// lies far away.
pub fn scripted_instance(outcomes: &[bool], scores: &[f64], num_gt: usize) -> (Vec<Detection>, Vec<GroundTruth>) {
    let gts: Vec<GroundTruth> = (0..num_gt)
        .map(|g| GroundTruth::new(format!("f{g}"), RotatedBox::new(0.0, 10.0, 2.0, 2.0, 0.0)))
        .collect();
    let mut next_gt = 0;
    let dets = outcomes
        .iter()
        .zip(scores)
        .map(|(&hit, &s)| {
            if hit && next_gt < num_gt {
                next_gt += 1;
                Detection::new(
                    format!("f{}", next_gt - 1),
                    RotatedBox::new(0.0, 10.0, 2.0, 2.0, 0.0),
                    s,
                )
            } else {
                Detection::new("f0", RotatedBox::new(100.0, 10.0, 2.0, 2.0, 0.0), s)
            }
        })
        .collect();
    (dets, gts)
}
