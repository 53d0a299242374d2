//! Synthetic virtual-array tensors.
//!
//! Each visible scatterer contributes a range-sinc response along range and
//! a physical array response across antennas:
//!
//! ```text
//! S(k, l, a) = Σ_s m_s · amp_s · sinc((ρ_l − ρ_s) / Δ)
//!              · exp(i[ψ_k(φ_s) − ψ_k(φ_a)]) · exp(i·δ_k(s)) + noise
//! ```
//!
//! with `ψ_k(φ) = π u_k sin φ` the steering phase, `δ_k` the phase accrued
//! by time-multiplexed transmit slots, and `m_s ~ Bernoulli(visibility_s)`
//! drawn once per scatterer per frame. Azimuth spread therefore comes from
//! the finite aperture rather than an explicit kernel.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArrayGeometry, PolarGrid, Scatterer, Scene};
use crate::rng::RngStream;
use crate::tensor::{Heatmap, VirtualArrayTensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Main-lobe width of the range sinc, in range bins.
    pub range_spread_bins: f64,
    /// Standard deviation of the complex Gaussian noise per antenna cell
    /// (`E|n|² = noise_floor²`).
    pub noise_floor: f64,
    /// Seconds between consecutive transmit slots.
    pub tx_dwell: f64,
    pub carrier_wavelength: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            range_spread_bins: 1.0,
            noise_floor: 0.05,
            tx_dwell: 1e-5,
            carrier_wavelength: 0.0039,
        }
    }
}

impl SimConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_floor: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_spread_bins > 0.0 && self.range_spread_bins.is_finite()) {
            return Err(Error::invalid("sim config", "range_spread_bins must be > 0"));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::invalid("sim config", "noise_floor must be >= 0"));
        }
        if !(self.tx_dwell >= 0.0 && self.tx_dwell.is_finite()) {
            return Err(Error::invalid("sim config", "tx_dwell must be >= 0"));
        }
        if !(self.carrier_wavelength > 0.0 && self.carrier_wavelength.is_finite()) {
            return Err(Error::invalid("sim config", "carrier_wavelength must be > 0"));
        }
        Ok(())
    }
}

/// Normalized sinc, `sin(πx)/(πx)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

pub fn steering_phase(geometry: &ArrayGeometry, k: usize, azimuth: f64) -> Result<f64> {
    let u = geometry.element_pos.get(k).ok_or(Error::IndexOutOfRange {
        index: k,
        len: geometry.num_virtual(),
    })?;
    Ok(PI * u * azimuth.sin())
}

pub fn doppler_phase(scatterer: &Scatterer, k: usize, geometry: &ArrayGeometry, config: &SimConfig) -> f64 {
    4.0 * PI / config.carrier_wavelength * scatterer.radial_velocity * config.tx_dwell * geometry.tx_index(k) as f64
}

/// Realized visibility of each scatterer, as drawn by [`synthesize_tensor`]
/// from the same stream.
pub fn visibility_mask(scene: &Scene, rng: &RngStream) -> Vec<bool> {
    let mut mask_rng = rng.derive_label("visibility");
    scene
        .scatterers
        .iter()
        .map(|s| mask_rng.bernoulli(s.visibility))
        .collect()
}

pub fn synthesize_tensor(
    scene: &Scene,
    geometry: &ArrayGeometry,
    grid: &PolarGrid,
    config: &SimConfig,
    rng: &RngStream,
) -> Result<VirtualArrayTensor> {
    geometry.validate()?;
    grid.validate()?;
    config.validate()?;
    for (i, s) in scene.scatterers.iter().enumerate() {
        s.validate()?;
        if !grid.contains(s.range, s.azimuth) {
            return Err(Error::OutsideGrid {
                index: i,
                reason: format!("range {} m, azimuth {} rad", s.range, s.azimuth),
            });
        }
    }

    let (kn, ln, an) = (geometry.num_virtual(), grid.num_range, grid.num_azimuth);
    let mut acc = vec![Complex64::new(0.0, 0.0); kn * ln * an];

    let visible = visibility_mask(scene, rng);

    let spread = config.range_spread_bins * grid.range_step();
    let az_sin: Vec<f64> = (0..an).map(|a| grid.azimuth_center(a).sin()).collect();
    let mut range_w = vec![0.0; ln];
    let mut phasor = vec![Complex64::new(0.0, 0.0); an];

    for (s, _) in scene.scatterers.iter().zip(&visible).filter(|(_, v)| **v) {
        for (l, w) in range_w.iter_mut().enumerate() {
            *w = s.amplitude * sinc((grid.range_center(l) - s.range) / spread);
        }
        let sin_s = s.azimuth.sin();
        for k in 0..kn {
            let u = geometry.element_pos[k];
            let doppler = doppler_phase(s, k, geometry, config);
            for (a, p) in phasor.iter_mut().enumerate() {
                *p = Complex64::from_polar(1.0, PI * u * (sin_s - az_sin[a]) + doppler);
            }
            let slab = &mut acc[k * ln * an..(k + 1) * ln * an];
            for (l, row) in slab.chunks_exact_mut(an).enumerate() {
                let w = range_w[l];
                if w == 0.0 {
                    continue;
                }
                for (cell, p) in row.iter_mut().zip(&phasor) {
                    *cell += p * w;
                }
            }
        }
    }

    if config.noise_floor > 0.0 {
        let mut noise_rng = rng.derive_label("noise");
        let sigma = config.noise_floor / std::f64::consts::SQRT_2;
        for cell in acc.iter_mut() {
            let re = noise_rng.normal();
            let im = noise_rng.normal();
            *cell += Complex64::new(re * sigma, im * sigma);
        }
    }

    let data = acc
        .into_iter()
        .map(|c| Complex32::new(c.re as f32, c.im as f32))
        .collect();
    VirtualArrayTensor::from_vec(kn, ln, an, data)
}

/// `r(l, a) = |Σ_k S(k, l, a)|`.
pub fn integrate_heatmap(tensor: &VirtualArrayTensor) -> Heatmap {
    let n = tensor.slab_len();
    let mut sum = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..tensor.num_virtual() {
        for (acc, c) in sum.iter_mut().zip(tensor.slab(k)) {
            *acc += Complex64::new(f64::from(c.re), f64::from(c.im));
        }
    }
    let data = sum.iter().map(|c| c.norm() as f32).collect();
    Heatmap::from_vec(tensor.num_range(), tensor.num_azimuth(), data)
        .expect("magnitudes of finite samples are finite and nonnegative")
}
