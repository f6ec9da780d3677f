//! Turning chunks, embeddings and psycholinguistic features into per-essay
//! SVM inputs.

use std::collections::{BTreeMap, HashMap};

use persona_core::embedding::{coverage_check, ChunkEmbeddingSet, ChunkKey, CoverageReport};
use persona_core::features::{fuse, pool};
use persona_core::linalg::Matrix;
use persona_core::svm::Label;
use persona_core::{PersonalityTrait, TraitLabels};
use rayon::prelude::*;

use crate::ceb::EmbeddingStore;
use crate::chunks::StoredChunk;
use crate::config::PipelineSettings;
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// The input vector of one chunk under `settings`.
pub fn chunk_vector(rec: &ChunkEmbeddingSet, settings: &PipelineSettings, psycho: Option<&[f64]>) -> Result<Vec<f64>> {
    let pooled = pool(rec, settings.layers.selector(), settings.pooling.pooling())?;
    Ok(fuse(pooled, if settings.psycho { psycho } else { None }))
}

/// Dimension of chunk vectors built from a store of the given layout.
pub fn vector_dim(settings: &PipelineSettings, n_layers: usize, dim: usize) -> Result<usize> {
    let sel = settings.layers.selector();
    sel.check(n_layers)?;
    let psycho = if settings.psycho { persona_core::features::PSYCHO_FEATURES } else { 0 };
    Ok(sel.output_dim(dim) + psycho)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssayFeatures {
    pub author_id: String,
    pub labels: TraitLabels,
    /// One vector per chunk, in chunk order. Empty for essays that produced no chunks.
    pub chunks: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub essays: Vec<EssayFeatures>,
    pub dim: usize,
}

impl Dataset {
    /// Essays with labels only, for classifiers that ignore features.
    pub fn labels_only(corpus: &Corpus) -> Self {
        let essays = corpus
            .essays
            .iter()
            .map(|e| EssayFeatures { author_id: e.author_id.clone(), labels: e.labels, chunks: Vec::new() })
            .collect();
        Dataset { essays, dim: 0 }
    }

    pub fn labels(&self, t: PersonalityTrait) -> Vec<bool> {
        self.essays.iter().map(|e| e.labels.get(t)).collect()
    }

    /// Stacks the chunks of the given essays into a training matrix; each
    /// chunk carries its essay's label for `t`.
    pub fn stack(&self, essay_indices: &[usize], t: PersonalityTrait) -> Result<(Matrix, Vec<Label>)> {
        let n: usize = essay_indices.iter().map(|&i| self.essays[i].chunks.len()).sum();
        let mut data = Vec::with_capacity(n * self.dim);
        let mut y = Vec::with_capacity(n);
        for &i in essay_indices {
            let e = &self.essays[i];
            for c in &e.chunks {
                data.extend_from_slice(c);
                y.push(Label::from_bool(e.labels.get(t)));
            }
        }
        Ok((Matrix::new(n, self.dim, data)?, y))
    }
}

/// Fails unless chunk keys and embedding keys match exactly. With
/// `allow_orphans`, extra embedding records are tolerated.
pub fn check_coverage(store: &EmbeddingStore, chunks: &[StoredChunk], allow_orphans: bool) -> Result<()> {
    let keys: Vec<ChunkKey> = chunks.iter().map(StoredChunk::key).collect();
    let mut report: CoverageReport = coverage_check(store.keys(), keys.iter());
    if allow_orphans {
        report.orphans.clear();
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Coverage(report))
    }
}

/// Builds per-essay chunk vectors for every essay of the corpus. Coverage
/// must already have been checked.
pub fn assemble(
    corpus: &Corpus,
    chunks: &[StoredChunk],
    store: &EmbeddingStore,
    settings: &PipelineSettings,
) -> Result<Dataset> {
    let layout = store.layout();
    let dim = vector_dim(settings, layout.n_layers, layout.dim)?;
    if settings.psycho && corpus.features.len() < corpus.essays.len() {
        return Err(Error::Config("psycholinguistic fusion is enabled but no feature table was loaded".into()));
    }
    let position: HashMap<&str, usize> =
        corpus.essays.iter().enumerate().map(|(i, e)| (e.author_id.as_str(), i)).collect();
    let mut by_essay: BTreeMap<usize, Vec<&StoredChunk>> = BTreeMap::new();
    for c in chunks {
        let i = *position
            .get(c.author_id.as_str())
            .ok_or_else(|| Error::Config(format!("chunk {} belongs to an essay that is not in the corpus", c.key())))?;
        by_essay.entry(i).or_default().push(c);
    }
    for cs in by_essay.values_mut() {
        cs.sort_by_key(|c| c.chunk_index);
    }

    let essays = corpus
        .essays
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let psycho = corpus.psycho(&e.author_id);
            let vectors = by_essay
                .get(&i)
                .map(|cs| {
                    cs.iter()
                        .map(|c| {
                            let rec = store.get(&c.author_id, c.chunk_index).ok_or_else(|| {
                                Error::Coverage(CoverageReport { missing: vec![c.key()], orphans: Vec::new() })
                            })?;
                            chunk_vector(rec, settings, psycho)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?
                .unwrap_or_default();
            Ok(EssayFeatures { author_id: e.author_id.clone(), labels: e.labels, chunks: vectors })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { essays, dim })
}
