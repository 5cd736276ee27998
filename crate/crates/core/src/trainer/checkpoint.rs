//! Binary checkpoint format.
//!
//! ```text
//! "XDSP"  version:u32  meta_len:u64  meta:[u8; meta_len] (JSON)
//! count:u32  { name_len:u16 name  dtype:u8  rank:u8  dims:[u64; rank]  data }*
//! ```
//! All integers and scalars are little-endian. dtype 0 is f32, 1 is f64.

use std::collections::BTreeMap;
use std::path::Path;

use numcore::{DType, Parameters, Tensor};
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::util;

use super::config::{Precision, TrainConfig};

pub const MAGIC: &[u8; 4] = b"XDSP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: u8,
    pub epoch: usize,
    /// Training examples seen in the epoch.
    pub examples: usize,
    /// Mean per-example loss over the epoch.
    pub loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// Domains whose examples trained this model, most recent last.
    pub domains: Vec<String>,
    /// Source domains of the checkpoint this one was adapted from.
    pub lineage: Vec<String>,
    /// Epochs run while selecting the stopping point.
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_validation_accuracy: Option<f64>,
    /// Epochs of the final run over training plus validation data.
    pub retrain_epochs: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    /// Parameters widened to f64; single-precision runs round-trip exactly.
    pub params: ModelParams<f64>,
    pub meta: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    config: TrainConfig,
    vocabulary: Vocabulary,
    training: TrainingMetadata,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&Metadata {
            config: self.config.clone(),
            vocabulary: self.vocab.clone(),
            training: self.meta.clone(),
        })?;
        let dtype = match self.config.precision {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        };
        let named = self.params.named();
        let numel: usize = named.iter().map(|(_, t)| t.numel()).sum();
        let mut out = Vec::with_capacity(64 + meta.len() + 8 * numel);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(named.len() as u32).to_le_bytes());
        for (name, t) in named {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dtype.code());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match dtype {
                DType::F32 => t.data().iter().for_each(|&x| out.extend_from_slice(&(x as f32).to_le_bytes())),
                DType::F64 => t.data().iter().for_each(|&x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let meta_len = usize::try_from(r.u64()?).map_err(|_| Error::Format("metadata too long".into()))?;
        let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| Error::Format(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let dtype = DType::from_code(r.u8()?).ok_or_else(|| Error::Format(format!("unknown dtype for {name:?}")))?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("dimension too large".into()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Format(format!("tensor {name:?} is too large")))?;
            let width = match dtype {
                DType::F32 => 4,
                DType::F64 => 8,
            };
            let raw = r.take(n.checked_mul(width).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data: Vec<f64> = match dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                DType::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            let t = Tensor::new(shape, data).map_err(|e| Error::Format(format!("tensor {name:?}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Format(format!("duplicate tensor {name:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = ModelParams::from_map(tensors)?;
        if params.dims().vocab != meta.vocabulary.len() {
            return Err(Error::Format(format!(
                "embedding has {} rows for a vocabulary of {}",
                params.dims().vocab,
                meta.vocabulary.len()
            )));
        }
        Ok(Checkpoint {
            config: meta.config,
            vocab: meta.vocabulary,
            params,
            meta: meta.training,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes atomically: a failed save leaves any previous file untouched.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    util::write_atomic(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
