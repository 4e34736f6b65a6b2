//! Raw tensor file: `PTNSR1`, dtype code, rank, u32 extents, little-endian payload.

use std::path::Path;

use super::{DType, Real, Tensor};
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 6] = b"PTNSR1";

/// A tensor read from disk whose element type is only known at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn cast<T: Real>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

pub fn encode_raw<T: Real>(t: &Tensor<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + t.len() * T::DTYPE.size());
    out.extend_from_slice(RAW_MAGIC);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<AnyTensor> {
    let need = |offset: usize, n: usize| -> Result<()> {
        if bytes.len() < offset + n {
            Err(Error::Truncated {
                offset: bytes.len(),
                needed: offset + n - bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(0, 8)?;
    if &bytes[..6] != RAW_MAGIC {
        return Err(Error::BadMagic { expected: "PTNSR1" });
    }
    let dtype = DType::from_code(bytes[6])
        .ok_or_else(|| Error::Format(format!("unknown dtype code {}", bytes[6])))?;
    let rank = bytes[7] as usize;
    need(8, rank * 4)?;
    let shape: Vec<usize> = (0..rank)
        .map(|i| {
            let o = 8 + 4 * i;
            u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
        })
        .collect();
    let count: usize = shape.iter().product();
    let start = 8 + 4 * rank;
    need(start, count * dtype.size())?;
    if bytes.len() != start + count * dtype.size() {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - start - count * dtype.size()
        )));
    }
    let payload = &bytes[start..];
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(Tensor::from_vec(
            shape,
            payload.chunks_exact(4).map(f32::read_le).collect(),
        )?),
        DType::F64 => AnyTensor::F64(Tensor::from_vec(
            shape,
            payload.chunks_exact(8).map(f64::read_le).collect(),
        )?),
    })
}

pub fn write_raw<T: Real>(t: &Tensor<T>, path: &Path) -> Result<()> {
    crate::image::atomic_write(path, &encode_raw(t))
}

pub fn read_raw(path: &Path) -> Result<AnyTensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes)
}

pub fn read_raw_as<T: Real>(path: &Path) -> Result<Tensor<T>> {
    read_raw(path).map(|t| t.cast())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new(&[1, 2], &[1.0, -2.0]).unwrap();
        let bytes = encode_raw(&t);
        assert_eq!(&bytes[..6], b"PTNSR1");
        assert_eq!(bytes[6], 0);
        assert_eq!(bytes[7], 2);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn round_trip_both_dtypes() {
        let a = Tensor::<f64>::new(&[2, 1, 3], &[0.1, 0.2, 0.3, -1.0, 5.5, 1e-300]).unwrap();
        assert_eq!(decode_raw(&encode_raw(&a)).unwrap(), AnyTensor::F64(a.clone()));
        let b: Tensor<f32> = a.cast();
        assert_eq!(decode_raw(&encode_raw(&b)).unwrap(), AnyTensor::F32(b));
    }

    #[test]
    fn truncated_and_bad_magic() {
        let t = Tensor::<f64>::zeros(&[4]);
        let bytes = encode_raw(&t);
        assert!(matches!(
            decode_raw(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_raw(&bad), Err(Error::BadMagic { .. })));
    }
}
