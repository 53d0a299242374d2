//! Radar encoder (dense backbone + projection head) with hand-written
//! reverse-mode gradients, and the frozen vision-oracle teacher.
//!
//! Each stage is a chain of dense layers with a rectifier between layers and
//! none after the stage's last layer. The head output is ℓ2-normalized; a
//! zero pre-normalization vector maps to `e₁` and passes no gradient.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Scene;
use crate::rng::RngStream;

/// Floating-point element type of the encoder.
pub trait Real: Float + Sum + Send + Sync + Debug + Default + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Items per gradient-reduction chunk. Fixed so the summation tree does not
/// depend on the worker count.
const REDUCE_CHUNK: usize = 8;

/// Layer widths. `backbone[0]` is the flattened heatmap size and the head
/// starts where the backbone ends.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub backbone: Vec<usize>,
    pub head: Vec<usize>,
}

impl EncoderShape {
    pub fn validate(&self) -> Result<()> {
        if self.backbone.len() < 2 || self.head.len() < 2 {
            return Err(Error::invalid("encoder shape", "each stage needs at least one layer"));
        }
        if self.backbone.iter().chain(&self.head).any(|&w| w == 0) {
            return Err(Error::invalid("encoder shape", "widths must be >= 1"));
        }
        if self.backbone.last() != self.head.first() {
            return Err(Error::invalid(
                "encoder shape",
                format!(
                    "backbone output {} does not feed head input {}",
                    self.backbone.last().unwrap(),
                    self.head[0]
                ),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.backbone[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.backbone.last().unwrap()
    }

    pub fn embed_dim(&self) -> usize {
        *self.head.last().unwrap()
    }
}

/// Encoder layer widths in trainer configs. The input width is taken from
/// the dataset grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub backbone_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub head_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub oracle_seed: u64,
    pub oracle_max_scatterers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backbone_hidden: vec![256],
            feature_dim: 128,
            head_hidden: vec![128],
            embed_dim: 128,
            oracle_seed: 0x0C11_9000,
            oracle_max_scatterers: 4,
        }
    }
}

impl EncoderConfig {
    pub fn shape(&self, input_dim: usize) -> EncoderShape {
        let mut backbone = vec![input_dim];
        backbone.extend(&self.backbone_hidden);
        backbone.push(self.feature_dim);
        let mut head = vec![self.feature_dim];
        head.extend(&self.head_hidden);
        head.push(self.embed_dim);
        EncoderShape { backbone, head }
    }
}

/// Dense layer `y = W x + b`, `W` row-major with `rows` outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![T::zero(); rows * cols],
            bias: vec![T::zero(); rows],
        }
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.cols)
                .zip(&self.bias)
                .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &v)| acc + w * v)),
        );
    }

    fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            rows: self.rows,
            cols: self.cols,
            weight: self.weight.iter().map(|w| U::of(w.as_f64())).collect(),
            bias: self.bias.iter().map(|b| U::of(b.as_f64())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a = *a + *b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a = *a + *b;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<T = f64> {
    pub backbone: Vec<Dense<T>>,
    pub head: Vec<Dense<T>>,
}

/// Gradient of a scalar loss with respect to every parameter, laid out like
/// [`EncoderParams`].
pub type GradientSet<T = f64> = EncoderParams<T>;

impl<T: Real> EncoderParams<T> {
    /// Glorot-uniform weights, zero biases. Weights are drawn layer by layer
    /// in row-major order.
    pub fn init(shape: &EncoderShape, rng: &mut RngStream) -> Result<Self> {
        shape.validate()?;
        let mut stage = |widths: &[usize]| -> Vec<Dense<T>> {
            widths
                .windows(2)
                .map(|w| {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let mut layer = Dense::zeros(fan_out, fan_in);
                    for v in layer.weight.iter_mut() {
                        *v = T::of(rng.uniform(-limit, limit));
                    }
                    layer
                })
                .collect()
        };
        let backbone = stage(&shape.backbone);
        let head = stage(&shape.head);
        Ok(Self { backbone, head })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |layers: &[Dense<T>]| layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect();
        Self {
            backbone: z(&self.backbone),
            head: z(&self.head),
        }
    }

    pub fn shape(&self) -> EncoderShape {
        let widths = |layers: &[Dense<T>]| {
            let mut w = vec![layers[0].cols];
            w.extend(layers.iter().map(|l| l.rows));
            w
        };
        EncoderShape {
            backbone: widths(&self.backbone),
            head: widths(&self.head),
        }
    }

    /// Structural check: non-empty stages, chained widths, finite values.
    pub fn validate(&self) -> Result<()> {
        if self.backbone.is_empty() || self.head.is_empty() {
            return Err(Error::invalid("encoder", "empty stage"));
        }
        for pair in self.layers().collect::<Vec<_>>().windows(2) {
            if pair[0].rows != pair[1].cols {
                return Err(Error::Shape(format!(
                    "layer output {} feeds input {}",
                    pair[0].rows, pair[1].cols
                )));
            }
        }
        for l in self.layers() {
            if l.weight.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(Error::Shape(format!(
                    "layer {}x{} has wrong buffer sizes",
                    l.rows, l.cols
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("encoder parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.backbone[0].cols
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.last().unwrap().rows
    }

    pub fn embed_dim(&self) -> usize {
        self.head.last().unwrap().rows
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.backbone.iter().chain(&self.head)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.backbone.iter_mut().chain(self.head.iter_mut())
    }

    /// Every parameter buffer (weights then bias, layer by layer).
    pub fn buffers(&self) -> impl Iterator<Item = &[T]> {
        self.layers().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn is_finite(&self) -> bool {
        self.buffers().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        EncoderParams {
            backbone: self.backbone.iter().map(Dense::cast).collect(),
            head: self.head.iter().map(Dense::cast).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.add_assign(b);
        }
    }

    fn relu_after(&self, idx: usize) -> bool {
        let nb = self.backbone.len();
        if idx < nb {
            idx + 1 < nb
        } else {
            idx + 1 < nb + self.head.len()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forward<T> {
    pub backbone_feat: Vec<T>,
    pub projected: Vec<T>,
    /// The head output was exactly zero and `projected` is the `e₁` fallback.
    pub degenerate: bool,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    /// Input to each layer, after the previous layer's rectifier.
    inputs: Vec<Vec<T>>,
    /// Pre-activation output of each layer.
    outputs: Vec<Vec<T>>,
    norm: T,
    pub forward: Forward<T>,
}

fn unit_e1<T: Real>(dim: usize) -> Vec<T> {
    let mut v = vec![T::zero(); dim];
    v[0] = T::one();
    v
}

/// ℓ2-normalize, falling back to `e₁` for the zero vector.
pub fn normalize<T: Real>(v: &[T]) -> (Vec<T>, bool) {
    let norm = v.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if norm == T::zero() {
        (unit_e1(v.len()), true)
    } else {
        (v.iter().map(|x| *x / norm).collect(), false)
    }
}

pub fn forward_trace<T: Real>(params: &EncoderParams<T>, input: &[T]) -> Result<Trace<T>> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} values, encoder expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let n = params.backbone.len() + params.head.len();
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    let mut x = input.to_vec();
    let mut backbone_feat = Vec::new();
    for (i, layer) in params.layers().enumerate() {
        let mut y = Vec::with_capacity(layer.rows);
        layer.apply(&x, &mut y);
        let next = if params.relu_after(i) {
            y.iter().map(|v| v.max(T::zero())).collect()
        } else {
            y.clone()
        };
        inputs.push(std::mem::replace(&mut x, next));
        outputs.push(y);
        if i + 1 == params.backbone.len() {
            backbone_feat = x.clone();
        }
    }
    let norm = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
    let (projected, degenerate) = normalize(&x);
    Ok(Trace {
        inputs,
        outputs,
        norm,
        forward: Forward {
            backbone_feat,
            projected,
            degenerate,
        },
    })
}

pub fn forward<T: Real>(params: &EncoderParams<T>, input: &[T]) -> Result<Forward<T>> {
    forward_trace(params, input).map(|t| t.forward)
}

/// Backbone features only; skips the head.
pub fn features<T: Real>(params: &EncoderParams<T>, input: &[T]) -> Result<Vec<T>> {
    if input.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} values, encoder expects {}",
            input.len(),
            params.input_dim()
        )));
    }
    let mut x = input.to_vec();
    let mut y = Vec::new();
    for (i, layer) in params.backbone.iter().enumerate() {
        layer.apply(&x, &mut y);
        if i + 1 < params.backbone.len() {
            x = y.iter().map(|v| v.max(T::zero())).collect();
        } else {
            std::mem::swap(&mut x, &mut y);
        }
    }
    Ok(x)
}

/// Accumulate `∂L/∂θ` for one sample into `grads`, given `∂L/∂projected`.
pub fn backward_trace<T: Real>(
    params: &EncoderParams<T>,
    trace: &Trace<T>,
    upstream: &[T],
    grads: &mut GradientSet<T>,
) -> Result<()> {
    let embed = params.embed_dim();
    if upstream.len() != embed {
        return Err(Error::Shape(format!(
            "upstream gradient has {} values, embedding has {embed}",
            upstream.len()
        )));
    }
    if trace.forward.degenerate {
        return Ok(());
    }
    // d(z/|z|)/dz = (I - ẑẑᵀ)/|z|
    let zhat = &trace.forward.projected;
    let dot = zhat.iter().zip(upstream).map(|(a, b)| *a * *b).sum::<T>();
    let mut delta: Vec<T> = upstream
        .iter()
        .zip(zhat)
        .map(|(g, z)| (*g - *z * dot) / trace.norm)
        .collect();

    let layers: Vec<&Dense<T>> = params.layers().collect();
    let mut grad_layers: Vec<&mut Dense<T>> = grads.layers_mut().collect();
    for i in (0..layers.len()).rev() {
        if params.relu_after(i) {
            for (d, y) in delta.iter_mut().zip(&trace.outputs[i]) {
                if *y <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let layer = layers[i];
        let x = &trace.inputs[i];
        let g = &mut grad_layers[i];
        for (r, &d) in delta.iter().enumerate() {
            if d == T::zero() {
                continue;
            }
            g.bias[r] = g.bias[r] + d;
            let row = &mut g.weight[r * layer.cols..(r + 1) * layer.cols];
            for (w, &xv) in row.iter_mut().zip(x) {
                *w = *w + d * xv;
            }
        }
        if i > 0 {
            let mut prev = vec![T::zero(); layer.cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let row = &layer.weight[r * layer.cols..(r + 1) * layer.cols];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p = *p + w * d;
                }
            }
            delta = prev;
        }
    }
    Ok(())
}

/// Summed parameter gradient over a batch. `upstream[i]` is `∂L/∂projected`
/// for `inputs[i]`.
///
/// Items are reduced in fixed-size chunks, each summed in item order, and
/// the chunk sums are added in chunk order, so the result is bitwise stable
/// across thread counts.
pub fn backward<T: Real>(params: &EncoderParams<T>, inputs: &[&[T]], upstream: &[&[T]]) -> Result<GradientSet<T>> {
    if inputs.len() != upstream.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} upstream gradients",
            inputs.len(),
            upstream.len()
        )));
    }
    let traces = inputs
        .par_iter()
        .map(|x| forward_trace(params, x))
        .collect::<Result<Vec<_>>>()?;
    backward_traces(params, &traces, upstream)
}

/// [`backward`] for activations already recorded by [`forward_trace`].
pub fn backward_traces<T: Real>(
    params: &EncoderParams<T>,
    traces: &[Trace<T>],
    upstream: &[&[T]],
) -> Result<GradientSet<T>> {
    if traces.len() != upstream.len() {
        return Err(Error::Shape(format!(
            "{} traces but {} upstream gradients",
            traces.len(),
            upstream.len()
        )));
    }
    let chunks: Vec<Result<GradientSet<T>>> = traces
        .par_chunks(REDUCE_CHUNK)
        .zip(upstream.par_chunks(REDUCE_CHUNK))
        .map(|(ts, gs)| {
            let mut acc = params.zeros_like();
            for (trace, g) in ts.iter().zip(gs) {
                backward_trace(params, trace, g, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = params.zeros_like();
    for chunk in chunks {
        total.add_assign(&chunk?);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("encoder gradient".into()));
    }
    Ok(total)
}

/// Frozen teacher: a fixed random linear map of the scene's ground-truth
/// structure, ℓ2-normalized.
///
/// Scatterers are sorted by `(range, azimuth)` and each contributes
/// `(x, y, amplitude)`; the feature is zero-padded or truncated to
/// `3 · max_scatterers` values. The output depends only on the scene and
/// the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct VisionOracle {
    embed_dim: usize,
    max_scatterers: usize,
    matrix: Vec<f64>,
}

impl VisionOracle {
    pub fn new(oracle_seed: u64, embed_dim: usize, max_scatterers: usize) -> Result<Self> {
        if embed_dim == 0 || max_scatterers == 0 {
            return Err(Error::invalid(
                "vision oracle",
                "embed_dim and max_scatterers must be >= 1",
            ));
        }
        let cols = 3 * max_scatterers;
        let mut rng = RngStream::new(oracle_seed, crate::rng::label("vision-oracle"));
        let scale = 1.0 / (cols as f64).sqrt();
        let matrix = (0..embed_dim * cols).map(|_| rng.normal() * scale).collect();
        Ok(Self {
            embed_dim,
            max_scatterers,
            matrix,
        })
    }

    pub fn from_config(config: &EncoderConfig) -> Result<Self> {
        Self::new(config.oracle_seed, config.embed_dim, config.oracle_max_scatterers)
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn scene_feature(&self, scene: &Scene) -> Vec<f64> {
        let mut sorted: Vec<_> = scene.scatterers.iter().collect();
        sorted.sort_by(|a, b| a.range.total_cmp(&b.range).then(a.azimuth.total_cmp(&b.azimuth)));
        let mut feature = vec![0.0; 3 * self.max_scatterers];
        for (slot, s) in feature.chunks_exact_mut(3).zip(sorted) {
            let (x, y) = s.position();
            slot.copy_from_slice(&[x, y, s.amplitude]);
        }
        feature
    }

    pub fn embed(&self, scene: &Scene) -> Vec<f64> {
        let feature = self.scene_feature(scene);
        let cols = feature.len();
        let raw: Vec<f64> = self
            .matrix
            .chunks_exact(cols)
            .map(|row| row.iter().zip(&feature).map(|(m, f)| m * f).sum())
            .collect();
        normalize(&raw).0
    }
}

/// The oracle seen as a pure function; convenience wrapper.
pub fn vision_oracle(scene: &Scene, oracle_seed: u64, embed_dim: usize, max_scatterers: usize) -> Result<Vec<f64>> {
    Ok(VisionOracle::new(oracle_seed, embed_dim, max_scatterers)?.embed(scene))
}
