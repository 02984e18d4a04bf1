//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"MESCCKPT"  u32 version
//! u32 header_len  header_len bytes of JSON header
//! u32 n_blocks
//! per block: u16 name_len, name, u8 ndims, ndims × u32 dims,
//!            u8 width (4 or 8), product(dims) × width bytes
//! ```
//!
//! The header carries the model config, the vocabulary token list and its
//! digest, the segment schema and training metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::transformer::{ForwardError, ParamStore, Tensor, Transformer};
use super::vocab::{Vocab, VocabError};
use crate::reasoning::schema::SegmentSchema;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MESCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("vocabulary digest mismatch: checkpoint {stored}, vocabulary {actual}")]
    DigestMismatch { stored: String, actual: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Layout(#[from] ForwardError),
    #[error("unsupported parameter width {0}")]
    Width(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub loss_curve: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_digest: String,
    vocab: Vec<String>,
    schema: SegmentSchema,
    meta: TrainingMeta,
}

#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub schema: SegmentSchema,
    pub params: ParamStore<T>,
    pub meta: TrainingMeta,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(model: &Transformer<T>, vocab: Vocab, schema: SegmentSchema, meta: TrainingMeta) -> Self {
        Self {
            config: model.config().clone(),
            vocab,
            schema,
            params: model.params.clone(),
            meta,
        }
    }

    pub fn transformer(&self) -> Result<Transformer<T>, CheckpointError> {
        Ok(Transformer::from_params(self.config.clone(), self.vocab.len(), self.params.clone())?)
    }

    pub fn vocab_digest(&self) -> String {
        self.vocab.digest()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            vocab_digest: self.vocab.digest(),
            vocab: self.vocab.tokens().to_vec(),
            schema: self.schema.clone(),
            meta: self.meta.clone(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.tensors.len() as u32).to_le_bytes());
        for t in &self.params.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(T::WIDTH);
            for &v in &t.data {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Parse a container; blocks of either width convert to `T`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let vocab = Vocab::from_tokens(header.vocab)?;
        if vocab.digest() != header.vocab_digest {
            return Err(CheckpointError::DigestMismatch {
                stored: header.vocab_digest,
                actual: vocab.digest(),
            });
        }
        let n_blocks = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Header("non-UTF-8 tensor name".into()))?;
            let ndims = r.u8()? as usize;
            let shape = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let width = r.u8()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(width as usize).ok_or(CheckpointError::Truncated)?)?;
            let data = match width {
                4 => raw.chunks_exact(4).map(|c| T::from_f64_lossy(f32::read_le(c) as f64)).collect(),
                8 => raw.chunks_exact(8).map(|c| T::from_f64_lossy(f64::read_le(c))).collect(),
                w => return Err(CheckpointError::Width(w)),
            };
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Header("trailing bytes".into()));
        }
        let ckpt = Self {
            config: header.config,
            vocab,
            schema: header.schema,
            params: ParamStore { tensors },
            meta: header.meta,
        };
        ckpt.transformer()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Load and require the stored vocabulary to be exactly `vocab`.
    pub fn load_for_vocab(path: impl AsRef<Path>, vocab: &Vocab) -> Result<Self, CheckpointError> {
        let ckpt = Self::load(path)?;
        if ckpt.vocab.digest() != vocab.digest() {
            return Err(CheckpointError::DigestMismatch {
                stored: ckpt.vocab.digest(),
                actual: vocab.digest(),
            });
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint<f64> {
        let vocab = Vocab::build(["hello there"], 1);
        let model = Transformer::<f64>::new(super::super::config::ModelConfig::micro(), vocab.len());
        Checkpoint::from_model(&model, vocab, SegmentSchema::default(), TrainingMeta::default())
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::<f64>::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.params, c.params);
        assert_eq!(back.vocab, c.vocab);
        assert_eq!(back.config, c.config);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn header_starts_with_magic() {
        let b = sample().to_bytes();
        assert_eq!(&b[..8], b"MESCCKPT");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
    }

    #[test]
    fn tampered_digest_rejected() {
        let c = sample();
        let bytes = c.to_bytes();
        let digest = c.vocab.digest();
        let pos = bytes.windows(digest.len()).position(|w| w == digest.as_bytes()).unwrap();
        let mut bad = bytes;
        bad[pos] = if bad[pos] == b'0' { b'1' } else { b'0' };
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bad),
            Err(CheckpointError::DigestMismatch { .. })
        ));
    }

    #[test]
    fn wrong_vocab_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        sample().save(&path).unwrap();
        let other = Vocab::build(["something else"], 1);
        assert!(matches!(
            Checkpoint::<f64>::load_for_vocab(&path, &other),
            Err(CheckpointError::DigestMismatch { .. })
        ));
        assert!(Checkpoint::<f64>::load_for_vocab(&path, &sample().vocab).is_ok());
    }

    #[test]
    fn truncation_and_magic_errors() {
        let b = sample().to_bytes();
        assert!(matches!(Checkpoint::<f64>::from_bytes(&b[..b.len() - 3]), Err(CheckpointError::Truncated)));
        assert!(matches!(Checkpoint::<f64>::from_bytes(b"NOTACKPT"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn width_converts() {
        let c = sample();
        let as32 = Checkpoint::<f32>::from_bytes(&c.to_bytes()).unwrap();
        let back = Checkpoint::<f64>::from_bytes(&as32.to_bytes()).unwrap();
        let a = c.params.tensors[0].data[3];
        assert_eq!(back.params.tensors[0].data[3], a as f32 as f64);
    }
}
