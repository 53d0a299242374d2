//! Encoder checkpoints.
//!
//! Layout (little-endian): `"CKP1"`, then the backbone as `u32` layer count
//! followed by, per layer, `u32 rows`, `u32 cols`, `rows·cols` f32 weights
//! (row-major) and `rows` f32 biases; the projection head follows with the
//! same scheme; a trailing `u64` training-step counter closes the file.

use std::path::Path;

use crate::encoder::{Dense, EncoderParams};
use crate::error::{Error, Result};
use crate::io::{checked_dims, dim_u32, write_bytes, Reader};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"CKP1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams<f64>,
    pub step: u64,
}

fn encode_stage(out: &mut Vec<u8>, layers: &[Dense<f64>]) -> Result<()> {
    out.extend_from_slice(&dim_u32(layers.len(), "layer count")?.to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&dim_u32(layer.rows, "rows")?.to_le_bytes());
        out.extend_from_slice(&dim_u32(layer.cols, "cols")?.to_le_bytes());
        for v in layer.weight.iter().chain(&layer.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(())
}

fn decode_stage(r: &mut Reader<'_>) -> Result<Vec<Dense<f64>>> {
    let count = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        let at = r.offset();
        let (rows, cols) = (r.u32()?, r.u32()?);
        let n = checked_dims(&[rows, cols], at)?;
        let weight = r.f32s(n)?.into_iter().map(f64::from).collect();
        let bias = r.f32s(rows as usize)?.into_iter().map(f64::from).collect();
        layers.push(Dense {
            rows: rows as usize,
            cols: cols as usize,
            weight,
            bias,
        });
    }
    Ok(layers)
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        encode_stage(&mut out, &self.params.backbone)?;
        encode_stage(&mut out, &self.params.head)?;
        out.extend_from_slice(&self.step.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let backbone = decode_stage(&mut r)?;
        let head = decode_stage(&mut r)?;
        let step = r.u64()?;
        r.finish()?;
        let params = EncoderParams { backbone, head };
        params.validate()?;
        Ok(Self { params, step })
    }

    /// Parameters as they would read back from disk (rounded to f32).
    pub fn quantized(&self) -> EncoderParams<f64> {
        self.params.cast::<f32>().cast::<f64>()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.encode()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
