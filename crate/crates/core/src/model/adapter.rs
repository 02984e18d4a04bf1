//! Generator handles over trained checkpoints, remote endpoints and stubs.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointError};
use super::generator::{Generator, GeneratorError};
use super::vocab::{TokenId, Vocab};
use crate::reasoning::schema::SegmentSchema;

/// Same scores for every token.
#[derive(Debug, Clone, Copy)]
pub struct UniformGenerator {
    pub vocab_size: usize,
}

impl Generator for UniformGenerator {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, _: &[TokenId], _: &[TokenId]) -> Result<Vec<f64>, GeneratorError> {
        Ok(vec![0.0; self.vocab_size])
    }
}

/// Gaussian logits that are a pure function of (seed, source, prefix).
#[derive(Debug, Clone, Copy)]
pub struct RandomGenerator {
    pub vocab_size: usize,
    pub seed: u64,
    pub scale: f64,
}

fn fnv1a(seed: u64, parts: &[&[TokenId]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for t in part.iter().copied().chain([u32::MAX]) {
            for b in t.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

impl Generator for RandomGenerator {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, GeneratorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, &[source, prefix]));
        Ok((0..self.vocab_size)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * self.scale
            })
            .collect())
    }
}

/// Replays fixed logit rows keyed on the last prefix token; unscripted
/// steps are uniform.
#[derive(Debug, Clone, Default)]
pub struct ScriptedGenerator {
    pub vocab_size: usize,
    pub script: HashMap<TokenId, Vec<f64>>,
}

impl ScriptedGenerator {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            script: HashMap::new(),
        }
    }

    pub fn with_row(mut self, after: TokenId, logits: Vec<f64>) -> Self {
        self.script.insert(after, logits);
        self
    }

    /// After `after`, put all the mass on `next`.
    pub fn with_choice(self, after: TokenId, next: TokenId) -> Self {
        let mut row = vec![0.0; self.vocab_size];
        row[next as usize] = 50.0;
        self.with_row(after, row)
    }
}

impl Generator for ScriptedGenerator {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logits(&self, _: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, GeneratorError> {
        let row = prefix
            .last()
            .and_then(|t| self.script.get(t))
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.vocab_size]);
        if row.len() != self.vocab_size {
            return Err(GeneratorError::Shape {
                expected: self.vocab_size,
                got: row.len(),
            });
        }
        Ok(row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalGeneratorConfig {
    pub url: String,
    pub vocab_size: usize,
    pub timeout: Duration,
}

#[derive(Serialize)]
struct LogitsRequest<'a> {
    source: &'a [TokenId],
    prefix: &'a [TokenId],
}

#[derive(Deserialize)]
struct LogitsResponse {
    logits: Vec<f64>,
}

/// Remote scorer: POST `{"source": [...], "prefix": [...]}`, reply `{"logits": [...]}`.
pub struct ExternalGenerator {
    config: ExternalGeneratorConfig,
    agent: ureq::Agent,
}

impl ExternalGenerator {
    pub fn new(config: ExternalGeneratorConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self { config, agent }
    }
}

impl Generator for ExternalGenerator {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn next_logits(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>, GeneratorError> {
        let backend = |detail: String| GeneratorError::Backend {
            backend: "external".into(),
            detail,
        };
        let resp: LogitsResponse = self
            .agent
            .post(&self.config.url)
            .send_json(LogitsRequest { source, prefix })
            .map_err(|e| backend(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| backend(e.to_string()))?;
        if resp.logits.len() != self.config.vocab_size {
            return Err(GeneratorError::Shape {
                expected: self.config.vocab_size,
                got: resp.logits.len(),
            });
        }
        Ok(resp.logits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

pub enum GeneratorSource {
    Checkpoint { path: PathBuf, precision: Precision },
    External(ExternalGeneratorConfig),
    Stub(Arc<dyn Generator>),
}

/// A generator plus, when known, the vocabulary and schema it was trained with.
#[derive(Clone)]
pub struct GeneratorHandle {
    pub generator: Arc<dyn Generator>,
    pub vocab: Option<Vocab>,
    pub schema: Option<SegmentSchema>,
}

impl std::fmt::Debug for GeneratorHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratorHandle")
            .field("vocab_size", &self.generator.vocab_size())
            .field("has_vocab", &self.vocab.is_some())
            .finish()
    }
}

pub fn generator_adapter(source: GeneratorSource) -> Result<GeneratorHandle, CheckpointError> {
    Ok(match source {
        GeneratorSource::Checkpoint { path, precision } => {
            let bytes = std::fs::read(path)?;
            match precision {
                Precision::F32 => from_checkpoint(Checkpoint::<f32>::from_bytes(&bytes)?)?,
                Precision::F64 => from_checkpoint(Checkpoint::<f64>::from_bytes(&bytes)?)?,
            }
        }
        GeneratorSource::External(config) => GeneratorHandle {
            generator: Arc::new(ExternalGenerator::new(config)),
            vocab: None,
            schema: None,
        },
        GeneratorSource::Stub(generator) => GeneratorHandle {
            generator,
            vocab: None,
            schema: None,
        },
    })
}

pub fn from_checkpoint<T: crate::scalar::Scalar>(ckpt: Checkpoint<T>) -> Result<GeneratorHandle, CheckpointError> {
    let model = ckpt.transformer()?;
    Ok(GeneratorHandle {
        generator: Arc::new(model),
        vocab: Some(ckpt.vocab),
        schema: Some(ckpt.schema),
    })
}
