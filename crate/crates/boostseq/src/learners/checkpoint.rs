//! Weak-learner checkpoint files: magic "BSEQWL1", architecture descriptor,
//! then named parameter tensors as little-endian 64-bit floats with a shape
//! manifest.

use super::{build, Architecture, LearnerError, Provenance, WeakLearner};
use crate::tensor::Tensor as GenericTensor;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

type Tensor = GenericTensor<f64>;

pub const LEARNER_MAGIC: &[u8; 7] = b"BSEQWL1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic (not a weak-learner checkpoint)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u8),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

pub fn learner_to_bytes(learner: &WeakLearner) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(LEARNER_MAGIC);
    out.push(1u8);
    push_str(&mut out, &learner.arch.id());
    out.extend_from_slice(&(learner.params.len() as u32).to_le_bytes());
    for (name, param) in learner.params.iter() {
        push_str(&mut out, name);
        let shape = param.value.shape();
        out.push(shape.len() as u8);
        for &e in shape {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in param.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.data.len() {
            return Err(CheckpointError::Corrupt("truncated"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Corrupt("bad utf-8"))
    }
}

pub fn learner_from_bytes(bytes: &[u8]) -> Result<WeakLearner, CheckpointError> {
    let mut c = Cursor {
        data: bytes,
        pos: 0,
    };
    if c.take(7)? != LEARNER_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = c.u8()?;
    if version != 1 {
        return Err(CheckpointError::BadVersion(version));
    }
    let arch = Architecture::parse(&c.string()?)?;
    // fresh build fixes the expected parameter layout
    let mut learner = build(&arch, 0)?;
    let count = c.u32()? as usize;
    if count != learner.params.len() {
        return Err(CheckpointError::Corrupt("parameter count mismatch"));
    }
    for idx in 0..count {
        let name = c.string()?;
        if name != learner.params.name(idx) {
            return Err(CheckpointError::Corrupt("parameter name mismatch"));
        }
        let rank = c.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        if shape != learner.params.value(idx).shape() {
            return Err(CheckpointError::Corrupt("parameter shape mismatch"));
        }
        let n: usize = shape.iter().product();
        let raw = c.take(8 * n)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        learner.params.param_mut(idx).value =
            Tensor::new(shape, data).map_err(|_| CheckpointError::Corrupt("bad tensor"))?;
    }
    if c.pos != bytes.len() {
        return Err(CheckpointError::Corrupt("trailing bytes"));
    }
    learner.provenance = Provenance::Loaded;
    Ok(learner)
}

pub fn write_learner(path: &Path, learner: &WeakLearner) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&learner_to_bytes(learner))?;
    Ok(())
}

pub fn read_learner(path: &Path) -> Result<WeakLearner, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    learner_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Direction, RnnCellKind, RnnSpec};

    #[test]
    fn round_trip_is_bit_identical() {
        let arch = Architecture::Rnn(RnnSpec {
            cell: RnnCellKind::Lstm,
            layers: 2,
            width: 4,
            direction: Direction::Bidirectional,
            io_width: 3,
        });
        let learner = build(&arch, 99).unwrap();
        let bytes = learner_to_bytes(&learner);
        let loaded = learner_from_bytes(&bytes).unwrap();
        assert_eq!(loaded.arch, learner.arch);
        for i in 0..learner.params.len() {
            assert_eq!(loaded.params.value(i).data(), learner.params.value(i).data());
        }
        assert_eq!(learner_to_bytes(&loaded), bytes);
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(matches!(
            learner_from_bytes(b"NOTMAGIC"),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn truncation_rejected() {
        let learner = build(&Architecture::BiasOnly { outputs: 2 }, 0).unwrap();
        let bytes = learner_to_bytes(&learner);
        assert!(learner_from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
