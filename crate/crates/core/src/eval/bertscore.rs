//! Embedding-matching F1 with pluggable token embedders.

use super::EvalError;

pub const HASHED_PROVIDER: &str = "hashed-char-ngram";

pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    /// Unit-length (or all-zero) vector for one token.
    fn embed(&self, token: &str) -> Vec<f64>;
}

/// Bag of hashed character n-grams of `<token>`, L2-normalized. Counts are
/// non-negative so cosines lie in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct HashedNgramEmbedder {
    pub dim: usize,
    pub n: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self { dim: 256, n: 3 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Embedder for HashedNgramEmbedder {
    fn name(&self) -> &str {
        HASHED_PROVIDER
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        let chars: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
        let mut v = vec![0.0; self.dim];
        let n = self.n.min(chars.len()).max(1);
        for w in chars.windows(n) {
            let s: String = w.iter().collect();
            v[(fnv1a(s.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Look up a provider by name.
pub fn embedder_by_name(name: &str) -> Result<Box<dyn Embedder>, EvalError> {
    match name {
        HASHED_PROVIDER => Ok(Box::new(HashedNgramEmbedder::default())),
        other => Err(EvalError::UnknownProvider(other.to_string())),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Greedy-matching F1 for one pair.
pub fn bertscore_pair(candidate: &str, reference: &str, embedder: &dyn Embedder) -> f64 {
    let c: Vec<Vec<f64>> = candidate.split_whitespace().map(|t| embedder.embed(t)).collect();
    let r: Vec<Vec<f64>> = reference.split_whitespace().map(|t| embedder.embed(t)).collect();
    if c.is_empty() || r.is_empty() {
        return if c.is_empty() && r.is_empty() { 1.0 } else { 0.0 };
    }
    let best = |xs: &[Vec<f64>], ys: &[Vec<f64>]| -> f64 {
        xs.iter()
            .map(|x| ys.iter().map(|y| dot(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / xs.len() as f64
    };
    let p = best(&c, &r);
    let rec = best(&r, &c);
    if p + rec <= 0.0 {
        0.0
    } else {
        (2.0 * p * rec / (p + rec)).min(1.0)
    }
}

pub fn bertscore(candidates: &[String], references: &[String], embedder: &dyn Embedder) -> Result<f64, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::Empty("corpus"));
    }
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| bertscore_pair(c, r, embedder))
        .sum();
    Ok(sum / candidates.len() as f64)
}
