//! Weight checkpoint container.
//!
//! ```text
//! "OBCK"  u32 version  [32] arch fingerprint  u32 tensor count
//! per tensor: u32 name length, name bytes, u32 rank, rank x u64 dims,
//!             product(dims) x f64
//! ```
//! All integers and floats little-endian.

use alloc::format;
use alloc::vec::Vec;

use super::optim::OptimizerState;
use super::weights::{ModelWeights, Tensor};
use super::NnError;
use crate::digest::Digest;
use crate::wire::{put_f64, put_str, put_u32, put_u64, Reader, Truncated};

pub const MAGIC: &[u8; 4] = b"OBCK";
pub const VERSION: u32 = 1;

impl From<Truncated> for NnError {
    fn from(_: Truncated) -> Self {
        NnError::FormatError("truncated or malformed container".into())
    }
}

pub fn encode_weights(weights: &ModelWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(48 + weights.len() * 8);
    write_weights(&mut out, weights);
    out
}

pub(crate) fn write_weights(out: &mut Vec<u8>, weights: &ModelWeights) {
    out.extend_from_slice(MAGIC);
    put_u32(out, VERSION);
    out.extend_from_slice(weights.fingerprint().as_bytes());
    put_u32(out, weights.tensors().len() as u32);
    for t in weights.tensors() {
        put_str(out, &t.name);
        put_u32(out, t.shape.len() as u32);
        for &d in &t.shape {
            put_u64(out, d as u64);
        }
        for &v in &t.data {
            put_f64(out, v);
        }
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelWeights, NnError> {
    let mut r = Reader::new(bytes);
    let w = read_weights(&mut r)?;
    if !r.is_done() {
        return Err(NnError::FormatError(
            "trailing bytes after checkpoint".into(),
        ));
    }
    Ok(w)
}

pub(crate) fn read_weights(r: &mut Reader<'_>) -> Result<ModelWeights, NnError> {
    if r.take(4)? != MAGIC {
        return Err(NnError::FormatError("not a weight checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::FormatError(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut fp = [0u8; 32];
    fp.copy_from_slice(r.take(32)?);
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| NnError::FormatError("tensor size overflows".into()))?;
        let raw = r.take(len.checked_mul(8).ok_or(Truncated)?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    Ok(ModelWeights::from_parts(Digest(fp), tensors))
}

pub(crate) fn write_state(out: &mut Vec<u8>, state: &OptimizerState) {
    put_u64(out, state.step);
    for moments in [&state.first, &state.second] {
        put_u32(out, moments.len() as u32);
        for buf in moments {
            put_u64(out, buf.len() as u64);
            for &v in buf {
                put_f64(out, v);
            }
        }
    }
}

pub(crate) fn read_state(r: &mut Reader<'_>) -> Result<OptimizerState, NnError> {
    let step = r.u64()?;
    let read_moments = |r: &mut Reader<'_>| -> Result<Vec<Vec<f64>>, NnError> {
        let count = r.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u64()? as usize;
            let raw = r.take(len.checked_mul(8).ok_or(Truncated)?)?;
            out.push(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            );
        }
        Ok(out)
    };
    let first = read_moments(r)?;
    let second = read_moments(r)?;
    Ok(OptimizerState {
        step,
        first,
        second,
    })
}
