//! Checkpoint files.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `WSCK` |
//! | 4 | u32 version (1) |
//! | 4 | u32 header length `h` |
//! | h | UTF-8 JSON header: configs, participant ids, class labels |
//! | 4 | u32 blob count |
//! | ... | per blob: u32 name length, UTF-8 name, u64 count, f64 values |
//!
//! Parameter tensors are stored under their [`ModelParams`] names and the
//! normalization statistics under `norm`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::params::ModelParams;
use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::sim::GestureLabel;

pub const MAGIC: [u8; 4] = *b"WSCK";
pub const VERSION: u32 = 1;
const NORM_BLOB: &str = "norm";

/// A trained model with everything needed to classify and to audit its
/// training set. Class `i` of the classifier is `labels[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub params: ModelParams,
    pub norm: NormStats,
    /// Participants whose data reached any training batch, ascending.
    pub participants: Vec<u32>,
    pub labels: Vec<GestureLabel>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    seed: u64,
    participants: Vec<u32>,
    labels: Vec<GestureLabel>,
}

impl Checkpoint {
    pub fn class_of(&self, label: &GestureLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(format!("{} (id {}) is not a class of this checkpoint", label.name, label.id)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model: self.model_cfg.clone(),
            train: self.train_cfg.clone(),
            seed: self.train_cfg.seed,
            participants: self.participants.clone(),
            labels: self.labels.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut blobs: Vec<(String, Vec<f64>)> = Vec::new();
        self.params.for_each(|n, t| blobs.push((n.to_string(), t.to_vec())));
        blobs.push((NORM_BLOB.to_string(), self.norm.to_blob()?));

        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
        for (name, values) in &blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: bytes[..4].try_into().unwrap(),
            });
        }
        r.take(4)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let hlen = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(hlen)?).map_err(|e| Error::Malformed(format!("checkpoint header: {e}")))?;
        if header.seed != header.train.seed {
            return Err(Error::Malformed("checkpoint seed disagrees with its training config".into()));
        }
        header.model.validate()?;
        if header.labels.len() != header.model.n_classes {
            return Err(Error::Malformed(format!(
                "{} labels for {} classes",
                header.labels.len(),
                header.model.n_classes
            )));
        }
        let n_blobs = r.u32()? as usize;
        let mut blobs: Vec<(String, Vec<f64>)> = Vec::with_capacity(n_blobs.min(1024));
        for _ in 0..n_blobs {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|e| Error::Malformed(format!("blob name: {e}")))?
                .to_string();
            let count = r.u64()?;
            let need = count.checked_mul(8).ok_or_else(|| Error::Malformed("blob size overflow".into()))?;
            let raw = r.take_u64(need)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if blobs.iter().any(|(n, _)| *n == name) {
                return Err(Error::Malformed(format!("duplicate blob {name}")));
            }
            blobs.push((name, values));
        }
        if r.pos != bytes.len() {
            return Err(Error::TrailingData {
                extra: (bytes.len() - r.pos) as u64,
            });
        }
        let mut take = |name: &str| {
            blobs
                .iter()
                .position(|(n, _)| n == name)
                .map(|i| blobs.swap_remove(i).1)
        };
        let norm_blob = take(NORM_BLOB).ok_or_else(|| Error::Malformed("missing blob norm".into()))?;
        let norm = NormStats::from_blob(&norm_blob)?;
        let params = ModelParams::from_named(&header.model, &mut take)?;
        if let Some((n, _)) = blobs.first() {
            return Err(Error::Malformed(format!("unexpected blob {n}")));
        }
        Ok(Checkpoint {
            model_cfg: header.model,
            train_cfg: header.train,
            params,
            norm,
            participants: header.participants,
            labels: header.labels,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take_u64(&mut self, n: u64) -> Result<&'a [u8]> {
        let left = (self.bytes.len() - self.pos) as u64;
        if n > left {
            return Err(Error::Truncated {
                expected: self.pos as u64 + n,
                actual: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n as usize];
        self.pos += n as usize;
        Ok(out)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take_u64(n as u64)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
