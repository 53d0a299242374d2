//! Raw virtual-array tensors and range-azimuth heatmaps.
//!
//! Both types carry only their dimensions; the grid and array geometry they
//! were produced with travel alongside them (dataset manifest, sim inputs).

use num_complex::Complex32;

use crate::error::{Error, Result};

/// Complex tensor `S[k][l][a]`, stored k-major so each antenna slab is contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualArrayTensor {
    num_virtual: usize,
    num_range: usize,
    num_azimuth: usize,
    data: Vec<Complex32>,
}

impl VirtualArrayTensor {
    pub fn zeros(num_virtual: usize, num_range: usize, num_azimuth: usize) -> Self {
        Self {
            num_virtual,
            num_range,
            num_azimuth,
            data: vec![Complex32::new(0.0, 0.0); num_virtual * num_range * num_azimuth],
        }
    }

    pub fn from_vec(num_virtual: usize, num_range: usize, num_azimuth: usize, data: Vec<Complex32>) -> Result<Self> {
        let expected = num_virtual
            .checked_mul(num_range)
            .and_then(|v| v.checked_mul(num_azimuth))
            .ok_or_else(|| Error::Shape("tensor dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} samples for {num_virtual}x{num_range}x{num_azimuth}",
                data.len()
            )));
        }
        if data.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite("tensor sample".into()));
        }
        Ok(Self {
            num_virtual,
            num_range,
            num_azimuth,
            data,
        })
    }

    pub fn num_virtual(&self) -> usize {
        self.num_virtual
    }

    pub fn num_range(&self) -> usize {
        self.num_range
    }

    pub fn num_azimuth(&self) -> usize {
        self.num_azimuth
    }

    pub fn slab_len(&self) -> usize {
        self.num_range * self.num_azimuth
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    pub fn slab(&self, k: usize) -> &[Complex32] {
        let n = self.slab_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn slab_mut(&mut self, k: usize) -> &mut [Complex32] {
        let n = self.slab_len();
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, l: usize, a: usize) -> Complex32 {
        self.data[(k * self.num_range + l) * self.num_azimuth + a]
    }
}

/// Nonnegative real map `r[l][a]`, row-major with range rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    num_range: usize,
    num_azimuth: usize,
    data: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(num_range: usize, num_azimuth: usize) -> Self {
        Self {
            num_range,
            num_azimuth,
            data: vec![0.0; num_range * num_azimuth],
        }
    }

    pub fn from_vec(num_range: usize, num_azimuth: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != num_range * num_azimuth {
            return Err(Error::Shape(format!(
                "{} values for {num_range}x{num_azimuth} heatmap",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(
                "heatmap",
                format!("value {v} is not finite and nonnegative"),
            ));
        }
        Ok(Self {
            num_range,
            num_azimuth,
            data,
        })
    }

    pub fn num_range(&self) -> usize {
        self.num_range
    }

    pub fn num_azimuth(&self) -> usize {
        self.num_azimuth
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, l: usize, a: usize) -> f32 {
        self.data[l * self.num_azimuth + a]
    }

    pub(crate) fn set(&mut self, l: usize, a: usize, v: f32) {
        self.data[l * self.num_azimuth + a] = v;
    }

    /// Location and value of the maximum; the first cell in row-major order
    /// wins ties.
    pub fn argmax(&self) -> (usize, usize, f32) {
        let mut best = (0usize, f32::NEG_INFINITY);
        for (i, &v) in self.data.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        (best.0 / self.num_azimuth, best.0 % self.num_azimuth, best.1)
    }
}
