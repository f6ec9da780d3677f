//! Per-chunk, per-layer mean-pooled embeddings and key coverage checks.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Identifies one chunk of one essay.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkKey {
    pub author_id: String,
    pub chunk_index: u32,
}

impl ChunkKey {
    pub fn new(author_id: impl Into<String>, chunk_index: u32) -> Self {
        ChunkKey { author_id: author_id.into(), chunk_index }
    }
}

impl fmt::Display for ChunkKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.author_id, self.chunk_index)
    }
}

/// Token-mean-pooled layer matrix of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    pub n_tokens: u32,
    /// `n_layers × dim`, row-major.
    pub layers: Vec<f32>,
}

/// Layer matrix (`n_layers × dim`, row-major) of one chunk, each row the mean
/// of that layer's token representations.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkEmbeddingSet {
    pub author_id: String,
    pub chunk_index: u32,
    pub n_layers: usize,
    pub dim: usize,
    pub layers: Vec<f32>,
    pub n_tokens_pooled: u32,
    pub per_sentence: Option<Vec<SentenceEmbedding>>,
}

// Relative agreement required between the chunk matrix and the token-weighted
// mean of its sentence matrices.
const SENTENCE_MEAN_RTOL: f64 = 1e-5;

impl ChunkEmbeddingSet {
    pub fn key(&self) -> ChunkKey {
        ChunkKey::new(self.author_id.clone(), self.chunk_index)
    }

    pub fn layer(&self, i: usize) -> &[f32] {
        &self.layers[i * self.dim..(i + 1) * self.dim]
    }

    fn invalid(&self, reason: String) -> Error {
        Error::InvalidEmbedding { author_id: self.author_id.clone(), chunk_index: self.chunk_index, reason }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.dim == 0 {
            return Err(self.invalid("layer count and dimension must be at least 1".to_string()));
        }
        let size = self.n_layers * self.dim;
        if self.layers.len() != size {
            return Err(self.invalid(format!("expected {size} values, found {}", self.layers.len())));
        }
        if let Some(pos) = self.layers.iter().position(|v| !v.is_finite()) {
            return Err(self.invalid(format!("non-finite value at layer {} index {}", pos / self.dim, pos % self.dim)));
        }
        let Some(sentences) = &self.per_sentence else {
            return Ok(());
        };
        if sentences.is_empty() {
            return Err(self.invalid("per-sentence block is empty".to_string()));
        }
        let mut weight = 0.0f64;
        let mut mean = alloc::vec![0.0f64; size];
        for (s_idx, s) in sentences.iter().enumerate() {
            if s.layers.len() != size {
                return Err(self.invalid(format!("sentence {s_idx} has {} values, expected {size}", s.layers.len())));
            }
            if s.layers.iter().any(|v| !v.is_finite()) {
                return Err(self.invalid(format!("non-finite value in sentence {s_idx}")));
            }
            let w = f64::from(s.n_tokens);
            weight += w;
            for (m, &v) in mean.iter_mut().zip(&s.layers) {
                *m += w * f64::from(v);
            }
        }
        if weight == 0.0 {
            return Err(self.invalid("sentences pool zero tokens".to_string()));
        }
        for (pos, (m, &v)) in mean.iter().zip(&self.layers).enumerate() {
            let m = m / weight;
            let v = f64::from(v);
            if (m - v).abs() > SENTENCE_MEAN_RTOL * v.abs().max(m.abs()).max(1.0) {
                return Err(self.invalid(format!(
                    "token-weighted sentence mean {m} disagrees with chunk value {v} at layer {} index {}",
                    pos / self.dim,
                    pos % self.dim
                )));
            }
        }
        Ok(())
    }
}

/// Result of matching embedding records against chunk keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CoverageReport {
    /// Chunks with no embedding record.
    pub missing: Vec<ChunkKey>,
    /// Embedding records with no chunk.
    pub orphans: Vec<ChunkKey>,
}

impl CoverageReport {
    pub fn passed(&self) -> bool {
        self.missing.is_empty() && self.orphans.is_empty()
    }
}

pub fn coverage_check<'a, E, C>(embedding_keys: E, chunk_keys: C) -> CoverageReport
where
    E: IntoIterator<Item = &'a ChunkKey>,
    C: IntoIterator<Item = &'a ChunkKey>,
{
    let have: BTreeSet<&ChunkKey> = embedding_keys.into_iter().collect();
    let want: BTreeSet<&ChunkKey> = chunk_keys.into_iter().collect();
    CoverageReport {
        missing: want.difference(&have).map(|k| (*k).clone()).collect(),
        orphans: have.difference(&want).map(|k| (*k).clone()).collect(),
    }
}
