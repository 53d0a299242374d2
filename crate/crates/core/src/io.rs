//! Binary and JSON file formats.
//!
//! | file     | layout                                                         |
//! |----------|----------------------------------------------------------------|
//! | tensor   | `"RST1"`, u32 K, u32 L, u32 A, K·L·A × (f32 re, f32 im), k-major |
//! | heatmap  | `"HMP1"`, u32 L, u32 A, L·A × f32                               |
//! | scene    | UTF-8 JSON                                                     |
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use num_complex::Complex32;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Scene;
use crate::tensor::{Heatmap, VirtualArrayTensor};

pub const TENSOR_MAGIC: [u8; 4] = *b"RST1";
pub const HEATMAP_MAGIC: [u8; 4] = *b"HMP1";

/// Cursor over a byte slice that reports failures with their byte offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expected {
            let mut found = [0u8; 4];
            found.copy_from_slice(got);
            return Err(Error::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let nbytes = n.checked_mul(4).ok_or_else(|| Error::DimensionOverflow {
            offset: self.pos,
            detail: format!("{n} floats"),
        })?;
        let raw = self.take(nbytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::TrailingBytes { offset: self.pos });
        }
        Ok(())
    }
}

/// Product of declared dimensions, rejecting anything that cannot be addressed.
pub(crate) fn checked_dims(dims: &[u32], offset: usize) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d as usize)
            .filter(|n| n.checked_mul(8).is_some())
            .ok_or_else(|| Error::DimensionOverflow {
                offset,
                detail: format!("dimensions {dims:?} overflow"),
            })
    })
}

pub(crate) fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::DimensionOverflow {
        offset: 0,
        detail: format!("{what} = {n} does not fit in u32"),
    })
}

pub fn encode_tensor(tensor: &VirtualArrayTensor) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + tensor.data().len() * 8);
    out.extend_from_slice(&TENSOR_MAGIC);
    for (n, what) in [
        (tensor.num_virtual(), "K"),
        (tensor.num_range(), "L"),
        (tensor.num_azimuth(), "A"),
    ] {
        out.extend_from_slice(&dim_u32(n, what)?.to_le_bytes());
    }
    for c in tensor.data() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<VirtualArrayTensor> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    let dims_at = r.offset();
    let (k, l, a) = (r.u32()?, r.u32()?, r.u32()?);
    let n = checked_dims(&[k, l, a], dims_at)?;
    let floats = r.f32s(n * 2)?;
    r.finish()?;
    let data = floats.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])).collect();
    VirtualArrayTensor::from_vec(k as usize, l as usize, a as usize, data)
}

pub fn encode_heatmap(heatmap: &Heatmap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + heatmap.len() * 4);
    out.extend_from_slice(&HEATMAP_MAGIC);
    out.extend_from_slice(&dim_u32(heatmap.num_range(), "L")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(heatmap.num_azimuth(), "A")?.to_le_bytes());
    for v in heatmap.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_heatmap(bytes: &[u8]) -> Result<Heatmap> {
    let mut r = Reader::new(bytes);
    r.magic(HEATMAP_MAGIC)?;
    let dims_at = r.offset();
    let (l, a) = (r.u32()?, r.u32()?);
    let n = checked_dims(&[l, a], dims_at)?;
    let data = r.f32s(n)?;
    r.finish()?;
    Heatmap::from_vec(l as usize, a as usize, data)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_tensor(tensor: &VirtualArrayTensor, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(tensor)?)
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<VirtualArrayTensor> {
    decode_tensor(&read_bytes(path.as_ref())?)
}

pub fn write_heatmap(heatmap: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_heatmap(heatmap)?)
}

pub fn read_heatmap(path: impl AsRef<Path>) -> Result<Heatmap> {
    decode_heatmap(&read_bytes(path.as_ref())?)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Pretty JSON with a trailing newline. Output is byte-stable for equal values.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let scene: Scene = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

pub fn write_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    write_json(scene, path)
}
