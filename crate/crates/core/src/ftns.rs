//! FTNS binary tensor files.
//!
//! Layout, all integers little-endian:
//!
//! | offset        | size      | field                          |
//! |---------------|-----------|--------------------------------|
//! | 0             | 4         | magic `b"FTNS"`                |
//! | 4             | 1         | version, `1`                   |
//! | 5             | 1         | dtype code, `0` f32 / `1` f64  |
//! | 6             | 4         | rank `r` (u32)                 |
//! | 10            | 8·r       | extents (u64 each)             |
//! | 10 + 8·r      | n·size    | row-major payload              |

use std::path::Path;

use crate::tensor::check_shape;
use crate::{Dtype, Error, Result, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"FTNS";
pub const VERSION: u8 = 1;

/// A tensor whose dtype is only known after reading the header.
#[derive(Debug, Clone, PartialEq)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl DynTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            DynTensor::F32(_) => Dtype::F32,
            DynTensor::F64(_) => Dtype::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
        }
    }

    /// Converts to the requested element type, rounding if needed.
    pub fn into_dtype<T: Scalar>(self) -> Tensor<T> {
        match self {
            DynTensor::F32(t) => t.cast(),
            DynTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode<T: Scalar>(t: &Tensor<T>) -> Vec<u8> {
    let size = T::DTYPE.size();
    let mut out = Vec::with_capacity(10 + 8 * t.rank() + size * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &n in t.shape() {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for &x in t.data() {
        x.put_le(&mut out);
    }
    out
}

fn take<'a>(bytes: &'a [u8], offset: usize, n: usize, what: &str) -> Result<&'a [u8]> {
    bytes.get(offset..offset + n).ok_or_else(|| Error::Format {
        offset,
        reason: format!("truncated: need {n} bytes for {what}, {} available", bytes.len().saturating_sub(offset)),
    })
}

pub fn decode(bytes: &[u8]) -> Result<DynTensor> {
    let magic = take(bytes, 0, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: format!("bad magic {magic:?}, expected \"FTNS\""),
        });
    }
    let version = take(bytes, 4, 1, "version")?[0];
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let code = take(bytes, 5, 1, "dtype code")?[0];
    let dtype = Dtype::from_code(code).ok_or_else(|| Error::Format {
        offset: 5,
        reason: format!("unknown dtype code {code}"),
    })?;
    let rank = u32::from_le_bytes(take(bytes, 6, 4, "rank")?.try_into().unwrap()) as usize;
    if rank == 0 {
        return Err(Error::Format {
            offset: 6,
            reason: "rank must be at least 1".into(),
        });
    }
    let mut shape = Vec::with_capacity(rank.min(64));
    let mut offset = 10;
    for _ in 0..rank {
        let n = u64::from_le_bytes(take(bytes, offset, 8, "extent")?.try_into().unwrap());
        let n = usize::try_from(n).map_err(|_| Error::Format {
            offset,
            reason: format!("extent {n} does not fit in memory"),
        })?;
        shape.push(n);
        offset += 8;
    }
    let len = check_shape(&shape).map_err(|e| Error::Format {
        offset: 10,
        reason: e.to_string(),
    })?;
    let payload_len = len.checked_mul(dtype.size()).ok_or_else(|| Error::Format {
        offset: 10,
        reason: format!("shape {shape:?} overflows"),
    })?;
    let payload = take(bytes, offset, payload_len, "payload")?;
    if bytes.len() > offset + payload_len {
        return Err(Error::Format {
            offset: offset + payload_len,
            reason: format!("{} trailing bytes", bytes.len() - offset - payload_len),
        });
    }
    Ok(match dtype {
        Dtype::F32 => DynTensor::F32(decode_payload(shape, payload)?),
        Dtype::F64 => DynTensor::F64(decode_payload(shape, payload)?),
    })
}

fn decode_payload<T: Scalar>(shape: Vec<usize>, payload: &[u8]) -> Result<Tensor<T>> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::take_le).collect();
    Tensor::new(shape, data)
}

pub fn write_tensor<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DynTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Reads a tensor that must already have dtype `T`.
pub fn read_tensor_as<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let t = read_tensor(path)?;
    if t.dtype() != T::DTYPE {
        return Err(Error::DtypeMismatch {
            found: t.dtype(),
            expected: T::DTYPE,
        });
    }
    Ok(t.into_dtype())
}
