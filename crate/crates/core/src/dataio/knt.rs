//! The `.knt` binary tensor format.
//!
//! Layout, all little-endian: magic `KNT1`, u32 dtype code (0 = f32,
//! 1 = f64), u32 rank, rank × u64 dims, then the row-major payload.
//! In-memory tensors are always f64; f32 files are upcast on read.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio;
use crate::numerics::Tensor;

pub const KNT_MAGIC: &[u8; 4] = b"KNT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KntDtype {
    F32,
    F64,
}

impl KntDtype {
    fn code(self) -> u32 {
        match self {
            KntDtype::F32 => 0,
            KntDtype::F64 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            KntDtype::F32 => 4,
            KntDtype::F64 => 8,
        }
    }
}

/// Serializes a tensor to `.knt` bytes. Writing f32 narrows the payload.
pub fn knt_bytes(tensor: &Tensor, dtype: KntDtype) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out =
        Vec::with_capacity(12 + shape.len() * 8 + tensor.numel() * dtype.size());
    out.extend_from_slice(KNT_MAGIC);
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        KntDtype::F32 => {
            for &v in tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        KntDtype::F64 => {
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parses one `.knt` record from the front of `bytes`; returns the tensor
/// and the number of bytes consumed. `origin` names the source in errors.
pub fn parse_knt(bytes: &[u8], origin: &str) -> Result<(Tensor, usize)> {
    let bad = |reason: String| Error::ShapeHeaderInconsistency {
        path: origin.to_string(),
        reason,
    };
    if bytes.len() < 12 {
        return Err(bad("truncated header".into()));
    }
    if &bytes[0..4] != KNT_MAGIC {
        return Err(bad("bad magic, expected KNT1".into()));
    }
    let dtype_code = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let dtype = match dtype_code {
        0 => KntDtype::F32,
        1 => KntDtype::F64,
        other => return Err(bad(format!("unknown dtype code {other}"))),
    };
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rank > 8 {
        return Err(bad(format!("implausible rank {rank}")));
    }
    let header = 12 + rank * 8;
    if bytes.len() < header {
        return Err(bad("truncated dims".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 12 + i * 8;
        shape.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize);
    }
    let numel: usize = shape.iter().product();
    let payload = numel * dtype.size();
    if bytes.len() < header + payload {
        return Err(bad(format!(
            "payload needs {} bytes, only {} present",
            payload,
            bytes.len() - header
        )));
    }
    let body = &bytes[header..header + payload];
    let data: Vec<f64> = match dtype {
        KntDtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        KntDtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok((Tensor::new(shape, data)?, header + payload))
}

pub fn write_knt(path: &Path, tensor: &Tensor, dtype: KntDtype) -> Result<()> {
    fsio::atomic_write(path, &knt_bytes(tensor, dtype))
}

pub fn read_knt(path: &Path) -> Result<Tensor> {
    let bytes = fsio::read_bytes(path)?;
    let origin = path.display().to_string();
    let (tensor, consumed) = parse_knt(&bytes, &origin)?;
    if consumed != bytes.len() {
        return Err(Error::ShapeHeaderInconsistency {
            path: origin,
            reason: format!("{} trailing bytes", bytes.len() - consumed),
        });
    }
    Ok(tensor)
}
