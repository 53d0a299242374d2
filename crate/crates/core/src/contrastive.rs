//! InfoNCE-style contrastive objectives over a mini-batch of embeddings.
//!
//! * intra-modal: two augmented radar views `z`, `z′` of each sample are
//!   positives, other samples' views are negatives; averaged over both
//!   directions.
//! * cross-modal: the prototype `z̄ = (z + z′)/2` is contrasted against the
//!   frozen vision embeddings.
//! * composite: `L = L_intra + λ_cross · L_cross`.
//!
//! Gradients are analytic softmax-minus-one-hot expressions; the vision
//! embeddings never receive gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which embeddings fill the denominator of a radar-to-radar term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativesVariant {
    /// All `B` embeddings of the other view, positive included once.
    #[default]
    OtherView,
    /// The positive plus the `B - 1` other embeddings of the anchor's own view.
    SameView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub lambda_cross: f64,
    pub symmetric_cross: bool,
    pub negatives_variant: NegativesVariant,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            lambda_cross: 1.0,
            symmetric_cross: false,
            negatives_variant: NegativesVariant::OtherView,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.temperature)?;
        if !(self.lambda_cross >= 0.0 && self.lambda_cross.is_finite()) {
            return Err(Error::invalid("contrastive config", "lambda_cross must be >= 0"));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("temperature", format!("tau = {tau} must be > 0")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `r → r′`: anchor `z_i`, positive `z′_i`.
    ViewToOther,
    /// `r′ → r`: anchor `z′_i`, positive `z_i`.
    OtherToView,
}

/// Tolerance for the unit-norm check on incoming embeddings.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    pub z: Vec<Vec<f64>>,
    pub z_prime: Vec<Vec<f64>>,
    pub z_vision: Option<Vec<Vec<f64>>>,
}

impl EmbeddingBatch {
    pub fn new(z: Vec<Vec<f64>>, z_prime: Vec<Vec<f64>>, z_vision: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let batch = Self { z, z_prime, z_vision };
        batch.validate(true)?;
        Ok(batch)
    }

    /// Skips the unit-norm check; for finite-difference probes that move
    /// embeddings off the sphere.
    pub fn unchecked(z: Vec<Vec<f64>>, z_prime: Vec<Vec<f64>>, z_vision: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let batch = Self { z, z_prime, z_vision };
        batch.validate(false)?;
        Ok(batch)
    }

    fn validate(&self, unit: bool) -> Result<()> {
        let b = self.z.len();
        if b == 0 {
            return Err(Error::invalid("embedding batch", "B = 0"));
        }
        if self.z_prime.len() != b {
            return Err(Error::Shape(format!(
                "{} views vs {} other views",
                b,
                self.z_prime.len()
            )));
        }
        let dim = self.z[0].len();
        let mut all: Vec<&Vec<f64>> = self.z.iter().chain(&self.z_prime).collect();
        if let Some(v) = &self.z_vision {
            if v.len() != b {
                return Err(Error::Shape(format!("{} vision rows for batch {b}", v.len())));
            }
            all.extend(v);
        }
        for row in all {
            if row.len() != dim {
                return Err(Error::Shape(format!("row of {} values, expected {dim}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embedding".into()));
            }
            if unit {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::invalid("embedding batch", format!("row norm {norm} is not 1")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.z[0].len()
    }

    pub fn swapped(&self) -> Self {
        Self {
            z: self.z_prime.clone(),
            z_prime: self.z.clone(),
            z_vision: self.z_vision.clone(),
        }
    }

    pub fn prototypes(&self) -> Vec<Vec<f64>> {
        self.z.iter().zip(&self.z_prime).map(|(a, b)| prototype(a, b)).collect()
    }

    fn vision(&self) -> Result<&[Vec<f64>]> {
        self.z_vision
            .as_deref()
            .ok_or_else(|| Error::invalid("embedding batch", "cross-modal loss needs vision embeddings"))
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `xᵀy / τ`.
pub fn sim(x: &[f64], y: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    Ok(dot(x, y) / tau)
}

/// Elementwise mean of the two views; not re-normalized.
pub fn prototype(z: &[f64], z_prime: &[f64]) -> Vec<f64> {
    z.iter().zip(z_prime).map(|(a, b)| (a + b) / 2.0).collect()
}

/// One softmax cross-entropy term: `-log softmax(sims)[positive]`.
///
/// Returns the loss and `softmax - onehot`, which is `τ · ∂ℓ/∂sim_j`.
fn info_nce(anchor: &[f64], candidates: &[&[f64]], positive: usize, tau: f64) -> (f64, Vec<f64>) {
    let sims: Vec<f64> = candidates.iter().map(|c| dot(anchor, c) / tau).collect();
    let m = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (sims[positive] - m);
    let mut weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    weights[positive] -= 1.0;
    (loss, weights)
}

/// Embedding slots a term can touch.
#[derive(Clone, Copy, Debug)]
enum Slot {
    View(usize),
    Other(usize),
    Proto(usize),
    Vision(usize),
}

struct Resolver<'a> {
    batch: &'a EmbeddingBatch,
    protos: Vec<Vec<f64>>,
}

impl<'a> Resolver<'a> {
    fn new(batch: &'a EmbeddingBatch, with_protos: bool) -> Self {
        let protos = if with_protos { batch.prototypes() } else { Vec::new() };
        Self { batch, protos }
    }

    fn get(&self, slot: Slot) -> &[f64] {
        match slot {
            Slot::View(i) => &self.batch.z[i],
            Slot::Other(i) => &self.batch.z_prime[i],
            Slot::Proto(i) => &self.protos[i],
            Slot::Vision(i) => &self.batch.z_vision.as_ref().expect("vision checked")[i],
        }
    }
}

/// Gradients of a loss with respect to the batch embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    pub z: Vec<Vec<f64>>,
    pub z_prime: Vec<Vec<f64>>,
    /// Always zero: the teacher is frozen.
    pub z_vision: Vec<Vec<f64>>,
}

impl LossGradients {
    fn zeros(b: usize, dim: usize) -> Self {
        Self {
            z: vec![vec![0.0; dim]; b],
            z_prime: vec![vec![0.0; dim]; b],
            z_vision: vec![vec![0.0; dim]; b],
        }
    }

    fn add(&mut self, slot: Slot, scale: f64, v: &[f64]) {
        let axpy = |dst: &mut Vec<f64>, s: f64| {
            for (d, x) in dst.iter_mut().zip(v) {
                *d += s * x;
            }
        };
        match slot {
            Slot::View(i) => axpy(&mut self.z[i], scale),
            Slot::Other(i) => axpy(&mut self.z_prime[i], scale),
            Slot::Proto(i) => {
                axpy(&mut self.z[i], scale / 2.0);
                axpy(&mut self.z_prime[i], scale / 2.0);
            }
            Slot::Vision(_) => {}
        }
    }
}

/// Evaluate one term and, when `grads` is given, accumulate `weight · ∂ℓ`.
fn term(
    res: &Resolver<'_>,
    anchor: Slot,
    candidates: &[Slot],
    positive: usize,
    tau: f64,
    weight: f64,
    grads: Option<&mut LossGradients>,
) -> f64 {
    let a = res.get(anchor);
    let cands: Vec<&[f64]> = candidates.iter().map(|s| res.get(*s)).collect();
    let (loss, w) = info_nce(a, &cands, positive, tau);
    if let Some(g) = grads {
        for (j, (slot, c)) in candidates.iter().zip(&cands).enumerate() {
            if w[j] != 0.0 {
                g.add(*slot, weight * w[j] / tau, a);
                g.add(anchor, weight * w[j] / tau, c);
            }
        }
    }
    loss
}

fn intra_slots(b: usize, i: usize, direction: Direction, variant: NegativesVariant) -> (Slot, Vec<Slot>, usize) {
    type Pick = fn(usize) -> Slot;
    let (own, other): (Pick, Pick) = match direction {
        Direction::ViewToOther => (Slot::View, Slot::Other),
        Direction::OtherToView => (Slot::Other, Slot::View),
    };
    match variant {
        NegativesVariant::OtherView => (own(i), (0..b).map(other).collect(), i),
        NegativesVariant::SameView => {
            let mut c = vec![other(i)];
            c.extend((0..b).filter(|&j| j != i).map(own));
            (own(i), c, 0)
        }
    }
}

fn check_index(batch: &EmbeddingBatch, i: usize) -> Result<()> {
    if i >= batch.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: batch.len(),
        });
    }
    Ok(())
}

/// `ℓ_i` for one sample and direction with the default (other-view) negatives.
pub fn intra_pair_loss(batch: &EmbeddingBatch, i: usize, direction: Direction, tau: f64) -> Result<f64> {
    intra_pair_loss_variant(batch, i, direction, tau, NegativesVariant::OtherView)
}

pub fn intra_pair_loss_variant(
    batch: &EmbeddingBatch,
    i: usize,
    direction: Direction,
    tau: f64,
    variant: NegativesVariant,
) -> Result<f64> {
    check_tau(tau)?;
    check_index(batch, i)?;
    let res = Resolver::new(batch, false);
    let (anchor, cands, pos) = intra_slots(batch.len(), i, direction, variant);
    Ok(term(&res, anchor, &cands, pos, tau, 0.0, None))
}

fn intra_impl(
    batch: &EmbeddingBatch,
    tau: f64,
    variant: NegativesVariant,
    scale: f64,
    mut grads: Option<&mut LossGradients>,
) -> f64 {
    let b = batch.len();
    let res = Resolver::new(batch, false);
    let weight = scale / (2.0 * b as f64);
    let mut terms = Vec::with_capacity(2 * b);
    for i in 0..b {
        for direction in [Direction::ViewToOther, Direction::OtherToView] {
            let (anchor, cands, pos) = intra_slots(b, i, direction, variant);
            terms.push(term(&res, anchor, &cands, pos, tau, weight, grads.as_deref_mut()));
        }
    }
    pairwise_sum(&terms) / (2.0 * b as f64)
}

/// Tree summation; exact for `2^n` equal terms.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

fn cross_impl(
    batch: &EmbeddingBatch,
    tau: f64,
    symmetric: bool,
    scale: f64,
    mut grads: Option<&mut LossGradients>,
) -> f64 {
    let b = batch.len();
    let res = Resolver::new(batch, true);
    let protos: Vec<Slot> = (0..b).map(Slot::Proto).collect();
    let vision: Vec<Slot> = (0..b).map(Slot::Vision).collect();
    let denom = if symmetric { 2.0 * b as f64 } else { b as f64 };
    let weight = scale / denom;
    let mut terms = Vec::with_capacity(2 * b);
    for i in 0..b {
        terms.push(term(
            &res,
            Slot::Proto(i),
            &vision,
            i,
            tau,
            weight,
            grads.as_deref_mut(),
        ));
        if symmetric {
            terms.push(term(
                &res,
                Slot::Vision(i),
                &protos,
                i,
                tau,
                weight,
                grads.as_deref_mut(),
            ));
        }
    }
    pairwise_sum(&terms) / denom
}

/// `L_intra = (1/2B) Σ_i (ℓ_i^{r→r′} + ℓ_i^{r′→r})`.
pub fn intra_loss(batch: &EmbeddingBatch, tau: f64) -> Result<f64> {
    intra_loss_variant(batch, tau, NegativesVariant::OtherView)
}

pub fn intra_loss_variant(batch: &EmbeddingBatch, tau: f64, variant: NegativesVariant) -> Result<f64> {
    check_tau(tau)?;
    Ok(intra_impl(batch, tau, variant, 0.0, None))
}

/// `L_cross = (1/B) Σ_i ℓ_i^{r̄→v}`, or the two-direction average when
/// `symmetric` is set.
pub fn cross_loss(batch: &EmbeddingBatch, tau: f64, symmetric: bool) -> Result<f64> {
    check_tau(tau)?;
    batch.vision()?;
    Ok(cross_impl(batch, tau, symmetric, 0.0, None))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub intra: f64,
    /// `None` when no vision embeddings were supplied.
    pub cross: Option<f64>,
    pub total: f64,
}

fn terms_impl(
    batch: &EmbeddingBatch,
    config: &ContrastiveConfig,
    grads: Option<&mut LossGradients>,
) -> Result<LossTerms> {
    config.validate()?;
    let tau = config.temperature;
    let lambda = config.lambda_cross;
    if lambda > 0.0 {
        batch.vision()?;
    }
    let mut grads = grads;
    let intra = intra_impl(batch, tau, config.negatives_variant, 1.0, grads.as_deref_mut());
    let cross = match (&batch.z_vision, lambda > 0.0) {
        (Some(_), true) => Some(cross_impl(batch, tau, config.symmetric_cross, lambda, grads)),
        (Some(_), false) => Some(cross_impl(batch, tau, config.symmetric_cross, 0.0, None)),
        (None, _) => None,
    };
    let total = match cross {
        Some(c) if lambda > 0.0 => intra + lambda * c,
        _ => intra,
    };
    if !total.is_finite() {
        return Err(Error::NonFinite("contrastive loss".into()));
    }
    Ok(LossTerms { intra, cross, total })
}

/// Intra and cross terms plus `L_intra + λ_cross · L_cross`.
pub fn loss_terms(batch: &EmbeddingBatch, config: &ContrastiveConfig) -> Result<LossTerms> {
    terms_impl(batch, config, None)
}

pub fn composite_loss(batch: &EmbeddingBatch, config: &ContrastiveConfig) -> Result<f64> {
    Ok(loss_terms(batch, config)?.total)
}

/// Composite loss and its gradient with respect to `z` and `z′`.
pub fn loss_and_gradients(batch: &EmbeddingBatch, config: &ContrastiveConfig) -> Result<(LossTerms, LossGradients)> {
    let mut grads = LossGradients::zeros(batch.len(), batch.dim());
    let terms = terms_impl(batch, config, Some(&mut grads))?;
    Ok((terms, grads))
}

pub fn loss_gradients(batch: &EmbeddingBatch, config: &ContrastiveConfig) -> Result<LossGradients> {
    loss_and_gradients(batch, config).map(|(_, g)| g)
}
