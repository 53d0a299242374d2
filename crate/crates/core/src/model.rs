//! Shared domain types.
//!
//! BEV convention used throughout: `x` is lateral (positive to the right),
//! `y` is forward along boresight, and yaw is measured from `+y` towards
//! `+x`. Azimuth follows the same sense, so a target at azimuth `φ` and
//! range `ρ` sits at `(ρ sin φ, ρ cos φ)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Virtual MIMO array: `num_tx × num_rx` virtual elements with aperture
/// positions in half-wavelength units, indexed `k = tx * num_rx + rx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_tx: usize,
    pub num_rx: usize,
    pub element_pos: Vec<f64>,
}

impl ArrayGeometry {
    /// Filled uniform linear virtual array, element `k` at position `k`.
    pub fn uniform(num_tx: usize, num_rx: usize) -> Result<Self> {
        let k = num_tx * num_rx;
        Self::new(num_tx, num_rx, (0..k).map(|i| i as f64).collect())
    }

    pub fn new(num_tx: usize, num_rx: usize, element_pos: Vec<f64>) -> Result<Self> {
        let geometry = Self {
            num_tx,
            num_rx,
            element_pos,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_tx.checked_mul(self.num_rx).unwrap_or(0);
        if k == 0 {
            return Err(Error::invalid("geometry", "need at least one virtual element"));
        }
        if self.element_pos.len() != k {
            return Err(Error::invalid(
                "geometry",
                format!(
                    "{} element positions for {}x{} = {k} virtual elements",
                    self.element_pos.len(),
                    self.num_tx,
                    self.num_rx
                ),
            ));
        }
        if self.element_pos.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("geometry", "non-finite element position"));
        }
        Ok(())
    }

    /// Number of virtual elements `K`.
    pub fn num_virtual(&self) -> usize {
        self.element_pos.len()
    }

    /// Transmit slot that element `k` belongs to.
    pub fn tx_index(&self, k: usize) -> usize {
        k / self.num_rx
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::uniform(3, 4).expect("3x4 array is valid")
    }
}

/// Range-azimuth grid. Bin `l` covers `[range_min + lΔρ, range_min + (l+1)Δρ)`
/// and is represented by its center; azimuth bins likewise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub num_range: usize,
    pub num_azimuth: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub az_min: f64,
    pub az_max: f64,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            num_range: 32,
            num_azimuth: 32,
            range_min: 2.0,
            range_max: 34.0,
            az_min: -PI / 3.0,
            az_max: PI / 3.0,
        }
    }
}

impl PolarGrid {
    pub fn validate(&self) -> Result<()> {
        if self.num_range == 0 || self.num_azimuth == 0 {
            return Err(Error::invalid("grid", "empty grid"));
        }
        if !(self.range_min >= 0.0 && self.range_min < self.range_max && self.range_max.is_finite()) {
            return Err(Error::invalid(
                "grid",
                format!(
                    "need 0 <= range_min < range_max, got [{}, {}]",
                    self.range_min, self.range_max
                ),
            ));
        }
        if !(self.az_min >= -FRAC_PI_2 && self.az_min < self.az_max && self.az_max <= FRAC_PI_2) {
            return Err(Error::invalid(
                "grid",
                format!(
                    "need -pi/2 <= az_min < az_max <= pi/2, got [{}, {}]",
                    self.az_min, self.az_max
                ),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.num_range * self.num_azimuth
    }

    pub fn range_step(&self) -> f64 {
        (self.range_max - self.range_min) / self.num_range as f64
    }

    pub fn azimuth_step(&self) -> f64 {
        (self.az_max - self.az_min) / self.num_azimuth as f64
    }

    pub fn range_center(&self, l: usize) -> f64 {
        self.range_min + (l as f64 + 0.5) * self.range_step()
    }

    pub fn azimuth_center(&self, a: usize) -> f64 {
        self.az_min + (a as f64 + 0.5) * self.azimuth_step()
    }

    pub fn contains(&self, range: f64, azimuth: f64) -> bool {
        range >= self.range_min && range <= self.range_max && azimuth >= self.az_min && azimuth <= self.az_max
    }

    /// Bin whose center is nearest to `(range, azimuth)`, clamped to the grid.
    pub fn nearest_bin(&self, range: f64, azimuth: f64) -> (usize, usize) {
        let l = ((range - self.range_min) / self.range_step() - 0.5).round();
        let a = ((azimuth - self.az_min) / self.azimuth_step() - 0.5).round();
        (
            l.clamp(0.0, (self.num_range - 1) as f64) as usize,
            a.clamp(0.0, (self.num_azimuth - 1) as f64) as usize,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub range: f64,
    pub azimuth: f64,
    pub amplitude: f64,
    pub visibility: f64,
    pub radial_velocity: f64,
}

impl Scatterer {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.range,
            self.azimuth,
            self.amplitude,
            self.visibility,
            self.radial_velocity,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("scatterer", "non-finite field"));
        }
        if self.amplitude < 0.0 {
            return Err(Error::invalid("scatterer", format!("amplitude {} < 0", self.amplitude)));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::invalid(
                "scatterer",
                format!("visibility {} outside [0,1]", self.visibility),
            ));
        }
        Ok(())
    }

    pub fn position(&self) -> (f64, f64) {
        polar_to_cartesian(self.range, self.azimuth)
    }
}

/// Oriented BEV box. `length` runs along the heading, `width` across it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotatedBox {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl RotatedBox {
    pub fn new(cx: f64, cy: f64, length: f64, width: f64, yaw: f64) -> Self {
        Self {
            cx,
            cy,
            length,
            width,
            yaw,
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::Degenerate(format!(
                "box extent {}x{} must be positive",
                self.length, self.width
            )));
        }
        if ![self.cx, self.cy, self.length, self.width, self.yaw]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("box", "non-finite field"));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid("box", format!("score {s} outside [0,1]")));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corners in counter-clockwise order (positive signed area).
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.yaw.sin_cos();
        // heading unit vector (sin, cos); right-hand normal (cos, -sin)
        let (hx, hy) = (s * self.length / 2.0, c * self.length / 2.0);
        let (nx, ny) = (c * self.width / 2.0, -s * self.width / 2.0);
        let p = |a: f64, b: f64| (self.cx + a * hx + b * nx, self.cy + a * hy + b * ny);
        // heading × normal has negative z, so walk the other way round
        [p(-1.0, -1.0), p(-1.0, 1.0), p(1.0, 1.0), p(1.0, -1.0)]
    }

    /// Half the diagonal: every point of the box lies within this distance
    /// of its center.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub boxes: Vec<RotatedBox>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("scene", "empty id"));
        }
        for s in &self.scatterers {
            s.validate()?;
        }
        for b in &self.boxes {
            b.validate()?;
        }
        Ok(())
    }

    /// Scatterer with the largest amplitude; earliest wins ties.
    pub fn strongest(&self) -> Option<&Scatterer> {
        self.scatterers
            .iter()
            .fold(None, |best: Option<&Scatterer>, s| match best {
                Some(b) if b.amplitude >= s.amplitude => Some(b),
                _ => Some(s),
            })
    }
}

pub fn polar_to_cartesian(range: f64, azimuth: f64) -> (f64, f64) {
    let (s, c) = azimuth.sin_cos();
    (range * s, range * c)
}

pub fn cartesian_to_polar(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y), x.atan2(y))
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}
