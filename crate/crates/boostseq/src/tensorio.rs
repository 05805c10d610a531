//! Binary tensor files: a magic string, a shape manifest, then the data as
//! little-endian 64-bit floats.

use crate::tensor::Tensor as GenericTensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

type Tensor = GenericTensor<f64>;

/// Magic for frame tensors.
pub const FRAMES_MAGIC: &[u8; 7] = b"BSEQFR1";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic")]
    BadMagic,
    #[error("corrupt tensor file: {0}")]
    Corrupt(&'static str),
}

pub fn tensor_to_bytes(magic: &[u8; 7], t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * t.len());
    out.extend_from_slice(magic);
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(magic: &[u8; 7], bytes: &[u8]) -> Result<Tensor, TensorIoError> {
    if bytes.len() < 8 || &bytes[..7] != magic {
        return Err(TensorIoError::BadMagic);
    }
    let rank = bytes[7] as usize;
    let mut pos = 8;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        if pos + 4 > bytes.len() {
            return Err(TensorIoError::Corrupt("truncated shape"));
        }
        shape.push(u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize);
        pos += 4;
    }
    let n: usize = shape.iter().product();
    if bytes.len() != pos + 8 * n {
        return Err(TensorIoError::Corrupt("data length mismatch"));
    }
    let data: Vec<f64> = bytes[pos..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data).map_err(|_| TensorIoError::Corrupt("bad shape"))
}

pub fn write_tensor(path: &Path, magic: &[u8; 7], t: &Tensor) -> Result<(), TensorIoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&tensor_to_bytes(magic, t))?;
    Ok(())
}

pub fn read_tensor(path: &Path, magic: &[u8; 7]) -> Result<Tensor, TensorIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    tensor_from_bytes(magic, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_bit_exact() {
        let t = Tensor::new(
            vec![2, 3],
            vec![0.1, -2.5, 1.0 / 3.0, f64::MIN_POSITIVE, 0.0, 9e300],
        )
        .unwrap();
        let bytes = tensor_to_bytes(FRAMES_MAGIC, &t);
        let back = tensor_from_bytes(FRAMES_MAGIC, &bytes).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn wrong_magic_rejected() {
        let t = Tensor::zeros(&[2]);
        let bytes = tensor_to_bytes(FRAMES_MAGIC, &t);
        assert!(matches!(
            tensor_from_bytes(b"BSEQWL1", &bytes),
            Err(TensorIoError::BadMagic)
        ));
    }
}
