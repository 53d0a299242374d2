//! View-generating augmentations.
//!
//! Two families: raw-domain operations on the virtual-array tensor (antenna
//! dropout and per-antenna phase noise, together "RMM"), and heatmap-domain
//! operations applied after integration in polar (range × azimuth) pixel
//! space. A pipeline is a declarative [`AugmentationSpec`]; every stochastic
//! choice is drawn from a counter-based stream so views replay exactly.

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::simulator::integrate_heatmap;
use crate::tensor::{Heatmap, VirtualArrayTensor};

pub const DEFAULT_KEEP_PROB: f64 = 0.9;
pub const DEFAULT_PHASE_ALPHA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentOp {
    /// Keep each virtual antenna with probability `p`.
    AntennaDropout {
        p: f64,
    },
    /// Rotate each antenna slab by `θ_k ~ U[-απ, απ)`.
    PhaseNoise {
        alpha: f64,
    },
    /// Integer azimuth shift drawn uniformly from `[-max_bins, max_bins]`.
    PolarRotate {
        max_bins: usize,
    },
    /// Crop fraction drawn uniformly from `[min_fraction, 1]`.
    CenterCrop {
        min_fraction: f64,
    },
    Hflip {
        prob: f64,
    },
    Vflip {
        prob: f64,
    },
    Cutout {
        max_frac: f64,
        prob: f64,
    },
    Threshold {
        percentile: f64,
        #[serde(default)]
        binarize: bool,
    },
}

impl AugmentOp {
    pub fn is_raw(&self) -> bool {
        matches!(self, AugmentOp::AntennaDropout { .. } | AugmentOp::PhaseNoise { .. })
    }

    fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid("augmentation", format!("{name} = {v} outside [0, 1]")))
            }
        };
        match *self {
            AugmentOp::AntennaDropout { p } => prob("p", p),
            AugmentOp::PhaseNoise { alpha } => {
                if (0.0..1.0).contains(&alpha) {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "augmentation",
                        format!("alpha = {alpha} outside [0, 1)"),
                    ))
                }
            }
            AugmentOp::PolarRotate { .. } => Ok(()),
            AugmentOp::CenterCrop { min_fraction } => {
                if min_fraction > 0.0 && min_fraction <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "augmentation",
                        format!("min_fraction = {min_fraction} outside (0, 1]"),
                    ))
                }
            }
            AugmentOp::Hflip { prob: p } | AugmentOp::Vflip { prob: p } => prob("prob", p),
            AugmentOp::Cutout { max_frac, prob: p } => {
                prob("prob", p)?;
                if max_frac > 0.0 && max_frac < 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "augmentation",
                        format!("max_frac = {max_frac} outside (0, 1)"),
                    ))
                }
            }
            AugmentOp::Threshold { percentile, .. } => {
                if (0.0..=100.0).contains(&percentile) {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "augmentation",
                        format!("percentile = {percentile} outside [0, 100]"),
                    ))
                }
            }
        }
    }
}

fn always() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentStep {
    #[serde(flatten)]
    pub op: AugmentOp,
    #[serde(default = "always")]
    pub apply_prob: f64,
}

impl AugmentStep {
    pub fn always(op: AugmentOp) -> Self {
        Self { op, apply_prob: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub steps: Vec<AugmentStep>,
}

impl Default for AugmentationSpec {
    /// RMM followed by polar center crop and azimuth flip.
    fn default() -> Self {
        Self {
            steps: vec![
                AugmentStep::always(AugmentOp::AntennaDropout { p: DEFAULT_KEEP_PROB }),
                AugmentStep::always(AugmentOp::PhaseNoise {
                    alpha: DEFAULT_PHASE_ALPHA,
                }),
                AugmentStep::always(AugmentOp::CenterCrop { min_fraction: 0.7 }),
                AugmentStep::always(AugmentOp::Hflip { prob: 0.5 }),
            ],
        }
    }
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        for step in &self.steps {
            step.op.validate()?;
            if !(0.0..=1.0).contains(&step.apply_prob) {
                return Err(Error::invalid(
                    "augmentation",
                    format!("apply_prob = {} outside [0, 1]", step.apply_prob),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewPair {
    pub view_a: Heatmap,
    pub view_b: Heatmap,
    pub source_id: String,
}

/// Per-antenna keep mask, `K` Bernoulli(p) draws.
pub fn draw_keep_mask(num_virtual: usize, p: f64, rng: &mut RngStream) -> Vec<bool> {
    (0..num_virtual).map(|_| rng.bernoulli(p)).collect()
}

/// Per-antenna phases, `K` draws from `U[-απ, απ)`.
pub fn draw_phases(num_virtual: usize, alpha: f64, rng: &mut RngStream) -> Vec<f64> {
    let half = alpha * std::f64::consts::PI;
    (0..num_virtual).map(|_| rng.uniform(-half, half)).collect()
}

pub fn apply_keep_mask(tensor: &VirtualArrayTensor, mask: &[bool]) -> VirtualArrayTensor {
    let mut out = tensor.clone();
    for (k, keep) in mask.iter().enumerate() {
        if !keep {
            out.slab_mut(k).fill(Complex32::new(0.0, 0.0));
        }
    }
    out
}

pub fn apply_phases(tensor: &VirtualArrayTensor, phases: &[f64]) -> VirtualArrayTensor {
    let mut out = tensor.clone();
    for (k, &theta) in phases.iter().enumerate() {
        if theta == 0.0 {
            continue;
        }
        let rot = Complex64::from_polar(1.0, theta);
        for c in out.slab_mut(k) {
            let v = Complex64::new(f64::from(c.re), f64::from(c.im)) * rot;
            *c = Complex32::new(v.re as f32, v.im as f32);
        }
    }
    out
}

pub fn antenna_dropout(tensor: &VirtualArrayTensor, p: f64, rng: &mut RngStream) -> VirtualArrayTensor {
    let mask = draw_keep_mask(tensor.num_virtual(), p, rng);
    apply_keep_mask(tensor, &mask)
}

pub fn phase_noise(tensor: &VirtualArrayTensor, alpha: f64, rng: &mut RngStream) -> VirtualArrayTensor {
    let phases = draw_phases(tensor.num_virtual(), alpha, rng);
    apply_phases(tensor, &phases)
}

/// Antenna dropout then phase noise, integrated. The mask is drawn before
/// the phases; the two scalings are diagonal per antenna and commute.
pub fn rmm(tensor: &VirtualArrayTensor, p: f64, alpha: f64, rng: &mut RngStream) -> Heatmap {
    let dropped = antenna_dropout(tensor, p, rng);
    integrate_heatmap(&phase_noise(&dropped, alpha, rng))
}

pub fn polar_rotate(heatmap: &Heatmap, shift_bins: i64) -> Result<Heatmap> {
    let an = heatmap.num_azimuth() as i64;
    if shift_bins.abs() >= an {
        return Err(Error::invalid(
            "rotation",
            format!("|shift| = {} must be below azimuth bins {an}", shift_bins.abs()),
        ));
    }
    let mut out = Heatmap::zeros(heatmap.num_range(), heatmap.num_azimuth());
    for l in 0..heatmap.num_range() {
        for a in 0..an {
            let src = a - shift_bins;
            if (0..an).contains(&src) {
                out.set(l, a as usize, heatmap.get(l, src as usize));
            }
        }
    }
    Ok(out)
}

fn bilinear(heatmap: &Heatmap, y: f64, x: f64) -> f64 {
    let (ln, an) = (heatmap.num_range(), heatmap.num_azimuth());
    let y0 = (y.floor().max(0.0) as usize).min(ln - 1);
    let x0 = (x.floor().max(0.0) as usize).min(an - 1);
    let y1 = (y0 + 1).min(ln - 1);
    let x1 = (x0 + 1).min(an - 1);
    let fy = (y - y0 as f64).clamp(0.0, 1.0);
    let fx = (x - x0 as f64).clamp(0.0, 1.0);
    let v = |l: usize, a: usize| f64::from(heatmap.get(l, a));
    let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
    let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Central `⌈f·L⌉ × ⌈f·A⌉` window resampled back to `L × A` bilinearly.
pub fn center_crop(heatmap: &Heatmap, fraction: f64) -> Result<Heatmap> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(
            "center crop",
            format!("fraction {fraction} outside (0, 1]"),
        ));
    }
    let (ln, an) = (heatmap.num_range(), heatmap.num_azimuth());
    let wl = ((fraction * ln as f64).ceil() as usize).min(ln);
    let wa = ((fraction * an as f64).ceil() as usize).min(an);
    if wl < 2 || wa < 2 {
        return Err(Error::invalid(
            "center crop",
            format!("window {wl}x{wa} smaller than 2x2"),
        ));
    }
    let y_start = (ln - wl) as f64 / 2.0;
    let x_start = (an - wa) as f64 / 2.0;
    let y_step = (wl - 1) as f64 / (ln - 1) as f64;
    let x_step = (wa - 1) as f64 / (an - 1) as f64;
    let mut out = Heatmap::zeros(ln, an);
    for l in 0..ln {
        let y = y_start + l as f64 * y_step;
        for a in 0..an {
            let x = x_start + a as f64 * x_step;
            out.set(l, a, bilinear(heatmap, y, x).max(0.0) as f32);
        }
    }
    Ok(out)
}

/// Reverse the azimuth axis.
pub fn hflip(heatmap: &Heatmap) -> Heatmap {
    let mut out = heatmap.clone();
    for row in out.data_mut().chunks_exact_mut(heatmap.num_azimuth()) {
        row.reverse();
    }
    out
}

/// Reverse the range axis.
pub fn vflip(heatmap: &Heatmap) -> Heatmap {
    let mut out = Heatmap::zeros(heatmap.num_range(), heatmap.num_azimuth());
    let ln = heatmap.num_range();
    for l in 0..ln {
        for a in 0..heatmap.num_azimuth() {
            out.set(ln - 1 - l, a, heatmap.get(l, a));
        }
    }
    out
}

/// Zero every cell below the `percentile`-th value of this heatmap.
///
/// With `n` cells sorted ascending the cutoff is the value at index
/// `⌊percentile·n/100⌋` (clamped to `n-1`), so exactly `⌈(1-q)·n⌉` cells
/// survive when values are distinct.
pub fn threshold(heatmap: &Heatmap, percentile: f64, binarize: bool) -> Heatmap {
    let mut sorted = heatmap.data().to_vec();
    if sorted.is_empty() {
        return heatmap.clone();
    }
    sorted.sort_by(f32::total_cmp);
    let n = sorted.len();
    let idx = ((percentile * n as f64 / 100.0).floor() as usize).min(n - 1);
    let cut = sorted[idx];
    let mut out = heatmap.clone();
    for v in out.data_mut() {
        if *v < cut {
            *v = 0.0;
        } else if binarize {
            *v = 1.0;
        }
    }
    out
}

/// Zero one random rectangle whose sides are at most `⌈max_frac·L⌉` and
/// `⌈max_frac·A⌉` cells.
pub fn cutout(heatmap: &Heatmap, max_frac: f64, rng: &mut RngStream) -> Heatmap {
    let (ln, an) = (heatmap.num_range(), heatmap.num_azimuth());
    let max_h = ((max_frac * ln as f64).ceil() as i64).clamp(1, ln as i64);
    let max_w = ((max_frac * an as f64).ceil() as i64).clamp(1, an as i64);
    let h = rng.range_inclusive(1, max_h) as usize;
    let w = rng.range_inclusive(1, max_w) as usize;
    let top = rng.below((ln - h + 1) as u64) as usize;
    let left = rng.below((an - w + 1) as u64) as usize;
    let mut out = heatmap.clone();
    for l in top..top + h {
        for a in left..left + w {
            out.set(l, a, 0.0);
        }
    }
    out
}

fn apply_heatmap_op(heatmap: Heatmap, op: &AugmentOp, rng: &mut RngStream) -> Result<Heatmap> {
    Ok(match *op {
        AugmentOp::PolarRotate { max_bins } => {
            let m = max_bins as i64;
            let shift = rng.range_inclusive(-m, m);
            polar_rotate(&heatmap, shift)?
        }
        AugmentOp::CenterCrop { min_fraction } => {
            let f = rng.uniform(min_fraction, 1.0);
            center_crop(&heatmap, f)?
        }
        AugmentOp::Hflip { prob } => {
            if rng.bernoulli(prob) {
                hflip(&heatmap)
            } else {
                heatmap
            }
        }
        AugmentOp::Vflip { prob } => {
            if rng.bernoulli(prob) {
                vflip(&heatmap)
            } else {
                heatmap
            }
        }
        AugmentOp::Cutout { max_frac, prob } => {
            if rng.bernoulli(prob) {
                cutout(&heatmap, max_frac, rng)
            } else {
                heatmap
            }
        }
        AugmentOp::Threshold { percentile, binarize } => threshold(&heatmap, percentile, binarize),
        AugmentOp::AntennaDropout { .. } | AugmentOp::PhaseNoise { .. } => {
            unreachable!("raw-domain step routed to heatmap stage")
        }
    })
}

/// One draw `t ~ 𝒯` applied to `tensor`.
///
/// Step `i` draws from its own child stream, so skipping a step (its
/// `apply_prob` coin came up tails) does not shift later draws.
pub fn apply_view(tensor: &VirtualArrayTensor, spec: &AugmentationSpec, rng: &RngStream) -> Result<Heatmap> {
    let mut raw: Option<VirtualArrayTensor> = None;
    let mut heatmap_steps = Vec::new();
    for (i, step) in spec.steps.iter().enumerate() {
        let mut step_rng = rng.derive(i as u64);
        if !step_rng.bernoulli(step.apply_prob) {
            continue;
        }
        if step.op.is_raw() {
            let current = raw.as_ref().unwrap_or(tensor);
            let next = match step.op {
                AugmentOp::AntennaDropout { p } => antenna_dropout(current, p, &mut step_rng),
                AugmentOp::PhaseNoise { alpha } => phase_noise(current, alpha, &mut step_rng),
                _ => unreachable!(),
            };
            raw = Some(next);
        } else {
            heatmap_steps.push((step, step_rng));
        }
    }
    let mut heatmap = integrate_heatmap(raw.as_ref().unwrap_or(tensor));
    for (step, mut step_rng) in heatmap_steps {
        heatmap = apply_heatmap_op(heatmap, &step.op, &mut step_rng)?;
    }
    Ok(heatmap)
}

/// Two independent draws `t, t′` from the same spec.
pub fn make_views(
    tensor: &VirtualArrayTensor,
    spec: &AugmentationSpec,
    rng: &RngStream,
    source_id: &str,
) -> Result<ViewPair> {
    spec.validate()?;
    Ok(ViewPair {
        view_a: apply_view(tensor, spec, &rng.derive(0))?,
        view_b: apply_view(tensor, spec, &rng.derive(1))?,
        source_id: source_id.to_string(),
    })
}
