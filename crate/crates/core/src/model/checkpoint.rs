//! Self-describing binary checkpoints.
//!
//! Layout: the 4 bytes `NOOV`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the UTF-8 JSON header, then every
//! tensor as little-endian `f32` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Parameters};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::neural::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NOOV";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch the parameters come from; 0 for untrained or pre-fine-tune weights.
    pub epoch: usize,
    pub dev_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model<f32>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    source_vocab: Vec<(String, u64)>,
    target_vocab: Vec<(String, u64)>,
    tensors: Vec<TensorEntry>,
    meta: CheckpointMeta,
}

impl ModelCheckpoint {
    pub fn new(model: Model<f32>) -> Self {
        ModelCheckpoint {
            model,
            meta: CheckpointMeta::default(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let vocab = |v: &Vocabulary| v.entries().map(|(t, c)| (t.to_owned(), c)).collect();
        let mut offset = 0u64;
        let tensors = self
            .model
            .params
            .named()
            .into_iter()
            .map(|(name, t)| {
                let entry = TensorEntry {
                    name,
                    shape: [t.rows(), t.cols()],
                    offset,
                };
                offset += 4 * t.len() as u64;
                entry
            })
            .collect();
        let header = Header {
            config: self.model.config.clone(),
            source_vocab: vocab(&self.model.src_vocab),
            target_vocab: vocab(&self.model.tgt_vocab),
            tensors,
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");

        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.model.params.tensors() {
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 16 {
            return Err(bad(format!("truncated: {} bytes, header needs 16", bytes.len())));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad magic {:?}, expected \"NOOV\"", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let body = &bytes[16..];
        if header_len > body.len() as u64 {
            return Err(bad(format!(
                "truncated: header of {header_len} bytes but only {} remain",
                body.len()
            )));
        }
        let (json, data) = body.split_at(header_len as usize);
        let header: Header =
            serde_json::from_slice(json).map_err(|e| bad(format!("invalid header: {e}")))?;

        let src_vocab = Vocabulary::from_entries(header.source_vocab)?;
        let tgt_vocab = Vocabulary::from_entries(header.target_vocab)?;
        header.config.validate()?;
        let mut params = Parameters::<f32>::zeros(&header.config.dims(src_vocab.len(), tgt_vocab.len()));
        let slots = params.named_mut();
        if slots.len() != header.tensors.len() {
            return Err(bad(format!(
                "manifest lists {} tensors, model needs {}",
                header.tensors.len(),
                slots.len()
            )));
        }
        let mut expected_offset = 0u64;
        for ((name, slot), entry) in slots.into_iter().zip(&header.tensors) {
            if entry.name != name || entry.shape != [slot.rows(), slot.cols()] {
                return Err(bad(format!(
                    "manifest entry {} {:?} does not match {name} {:?}",
                    entry.name,
                    entry.shape,
                    slot.shape()
                )));
            }
            if entry.offset != expected_offset {
                return Err(bad(format!("tensor {name} at offset {}, expected {expected_offset}", entry.offset)));
            }
            let start = entry.offset as usize;
            let end = start + 4 * slot.len();
            if end > data.len() {
                return Err(bad(format!("truncated tensor data for {name}")));
            }
            let values = data[start..end]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
                .collect();
            *slot = Tensor::from_vec(slot.rows(), slot.cols(), values)?;
            expected_offset = end as u64;
        }
        if expected_offset as usize != data.len() {
            return Err(bad(format!(
                "{} trailing bytes after tensor data",
                data.len() - expected_offset as usize
            )));
        }
        Ok(ModelCheckpoint {
            model: Model::from_parts(header.config, src_vocab, tgt_vocab, params)?,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
