//! SVM input vectors: layer selection, pooling variants, psycholinguistic
//! fusion and z-score standardization.

use alloc::string::String;
use alloc::vec::Vec;

use crate::embedding::ChunkEmbeddingSet;
use crate::{Error, Result};

/// Number of essay-level psycholinguistic features fused onto every chunk.
pub const PSYCHO_FEATURES: usize = 84;

/// Which layer rows of a chunk's embedding matrix become its vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSelector {
    /// One row, by index into the stored matrix.
    Single(usize),
    /// The last four rows concatenated in ascending layer order.
    LastFour,
    /// Element-wise mean of all rows.
    AllMean,
}

impl LayerSelector {
    pub fn output_dim(&self, dim: usize) -> usize {
        match self {
            LayerSelector::LastFour => 4 * dim,
            LayerSelector::Single(_) | LayerSelector::AllMean => dim,
        }
    }

    pub fn check(&self, n_layers: usize) -> Result<()> {
        match *self {
            LayerSelector::Single(index) if index >= n_layers => Err(Error::LayerOutOfRange { index, n_layers }),
            LayerSelector::LastFour if n_layers < 4 => Err(Error::TooFewLayers { needed: 4, n_layers }),
            _ => Ok(()),
        }
    }
}

/// How token representations are pooled into a chunk vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Mean over all tokens of the chunk.
    #[default]
    TokenMean,
    /// Mean over tokens per sentence, then unweighted mean over sentences.
    SentenceMean,
}

fn select_from(matrix: &[f32], n_layers: usize, dim: usize, sel: LayerSelector) -> Result<Vec<f64>> {
    sel.check(n_layers)?;
    let row = |i: usize| &matrix[i * dim..(i + 1) * dim];
    Ok(match sel {
        LayerSelector::Single(i) => row(i).iter().map(|&v| f64::from(v)).collect(),
        LayerSelector::LastFour => {
            (n_layers - 4..n_layers).flat_map(|i| row(i).iter().map(|&v| f64::from(v))).collect()
        }
        LayerSelector::AllMean => {
            let mut out = alloc::vec![0.0f64; dim];
            for i in 0..n_layers {
                for (o, &v) in out.iter_mut().zip(row(i)) {
                    *o += f64::from(v);
                }
            }
            let n = n_layers as f64;
            out.iter_mut().for_each(|o| *o /= n);
            out
        }
    })
}

pub fn select_layers(rec: &ChunkEmbeddingSet, sel: LayerSelector) -> Result<Vec<f64>> {
    select_from(&rec.layers, rec.n_layers, rec.dim, sel)
}

/// Applies `sel` to each sentence matrix and averages the results with equal
/// weight per sentence.
pub fn sentence_then_chunk_mean(rec: &ChunkEmbeddingSet, sel: LayerSelector) -> Result<Vec<f64>> {
    let sentences = rec.per_sentence.as_deref().filter(|s| !s.is_empty()).ok_or_else(|| {
        Error::MissingSentenceEmbeddings { author_id: rec.author_id.clone(), chunk_index: rec.chunk_index }
    })?;
    let mut out = alloc::vec![0.0f64; sel.output_dim(rec.dim)];
    for s in sentences {
        let v = select_from(&s.layers, rec.n_layers, rec.dim, sel)?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = sentences.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

pub fn pool(rec: &ChunkEmbeddingSet, sel: LayerSelector, pooling: Pooling) -> Result<Vec<f64>> {
    match pooling {
        Pooling::TokenMean => select_layers(rec, sel),
        Pooling::SentenceMean => sentence_then_chunk_mean(rec, sel),
    }
}

/// The SVM input for one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub author_id: String,
    pub chunk_index: u32,
    pub values: Vec<f64>,
}

/// Appends the essay's psycholinguistic features, when present, to a chunk vector.
pub fn fuse(mut chunk_vec: Vec<f64>, psycho: Option<&[f64]>) -> Vec<f64> {
    if let Some(p) = psycho {
        chunk_vec.extend_from_slice(p);
    }
    chunk_vec
}

// Features whose spread falls below this are treated as constant.
const MIN_STD: f64 = 1e-12;

/// Per-feature z-score standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    /// Leaves vectors unchanged.
    pub fn identity(dim: usize) -> Self {
        Scaler { means: alloc::vec![0.0; dim], stds: alloc::vec![1.0; dim] }
    }

    /// Fits means and population standard deviations on training vectors.
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
        I::IntoIter: Clone,
    {
        let rows = rows.into_iter();
        let mut n = 0usize;
        let mut means: Vec<f64> = Vec::new();
        for r in rows.clone() {
            if n == 0 {
                means = alloc::vec![0.0; r.len()];
            } else if r.len() != means.len() {
                return Err(Error::DimensionMismatch { expected: means.len(), got: r.len() });
            }
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let nf = n as f64;
        means.iter_mut().for_each(|m| *m /= nf);
        let mut vars = alloc::vec![0.0; means.len()];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                let d = v - m;
                *s += d * d;
            }
        }
        let stds = vars.into_iter().map(|s| libm::sqrt(s / nf)).collect();
        Ok(Scaler { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.means).zip(&self.stds) {
            *o = if *s < MIN_STD { 0.0 } else { (v - m) / s };
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; x.len()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }
}
