//! Chunk JSON-lines files and the preprocessing stage that produces them.
//!
//! One JSON object per line: `{"author_id", "chunk_index", "sentences": [[token, ...], ...]}`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use persona_core::embedding::ChunkKey;
use persona_core::textprep::{Chunk, ChunkPlan, Chunker, Sentence};
use persona_core::Essay;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A chunk as stored on disk (post-expansion tokens).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredChunk {
    pub author_id: String,
    pub chunk_index: u32,
    pub sentences: Vec<Vec<String>>,
}

impl StoredChunk {
    pub fn key(&self) -> ChunkKey {
        ChunkKey::new(self.author_id.clone(), self.chunk_index)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

impl From<&Chunk> for StoredChunk {
    fn from(c: &Chunk) -> Self {
        StoredChunk {
            author_id: c.author_id.clone(),
            chunk_index: c.chunk_index,
            sentences: c.sentences.iter().map(|s: &Sentence| s.tokens.clone()).collect(),
        }
    }
}

pub fn write_chunks<'a, W, I>(mut w: W, chunks: I) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a StoredChunk>,
{
    for c in chunks {
        serde_json::to_writer(&mut w, c)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_chunks(path: &Path, chunks: &[StoredChunk]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_chunks(std::io::BufWriter::new(file), chunks).map_err(|e| Error::io(path, e))
}

/// Reads a chunks file, checking that every essay's indices run 0..n with no gaps.
pub fn load_chunks(path: &Path) -> Result<Vec<StoredChunk>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Chunks { path: path.to_path_buf(), message };
    let mut chunks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let chunk: StoredChunk = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        if chunk.sentences.iter().flatten().any(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(bad(format!("line {}: chunk {} has an empty or whitespace token", i + 1, chunk.key())));
        }
        chunks.push(chunk);
    }
    let mut indices: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for c in &chunks {
        if !indices.entry(&c.author_id).or_default().insert(c.chunk_index) {
            return Err(bad(format!("duplicate chunk {}", c.key())));
        }
    }
    for (author, set) in &indices {
        if let Some((pos, idx)) = set.iter().enumerate().find(|(pos, idx)| **idx as usize != *pos) {
            return Err(bad(format!("chunks of {author} are not contiguous: expected index {pos}, found {idx}")));
        }
    }
    Ok(chunks)
}

/// Chunk indices grouped by essay, in index order.
pub fn group_by_author(chunks: &[StoredChunk]) -> BTreeMap<String, Vec<u32>> {
    let mut map: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for c in chunks {
        map.entry(c.author_id.clone()).or_default().push(c.chunk_index);
    }
    map.values_mut().for_each(|v| v.sort_unstable());
    map
}

/// Counts of chunk lengths in fixed-width buckets.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Histogram {
    pub bucket_width: usize,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bucket_width: usize) -> Self {
        Histogram { bucket_width, counts: Vec::new() }
    }

    pub fn add(&mut self, value: usize) {
        let b = value / self.bucket_width;
        if self.counts.len() <= b {
            self.counts.resize(b + 1, 0);
        }
        self.counts[b] += 1;
    }
}

impl fmt::Display for Histogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.counts.iter().enumerate().filter(|(_, n)| **n > 0) {
            let lo = i * self.bucket_width;
            writeln!(f, "  {:>4}-{:<4} {n}", lo, lo + self.bucket_width - 1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PreprocessSummary {
    pub essays: usize,
    pub chunks: usize,
    /// Essays that cleaned to nothing and produced no chunks.
    pub dropped: Vec<String>,
    pub max_pre_expansion_tokens: usize,
    pub max_post_expansion_tokens: usize,
    pub pre_expansion: Histogram,
    pub post_expansion: Histogram,
}

impl fmt::Display for PreprocessSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "essays: {}", self.essays)?;
        writeln!(f, "chunks: {}", self.chunks)?;
        if !self.dropped.is_empty() {
            writeln!(f, "dropped (empty after cleaning): {}", self.dropped.join(", "))?;
        }
        writeln!(
            f,
            "longest chunk: {} tokens before expansion, {} after",
            self.max_pre_expansion_tokens, self.max_post_expansion_tokens
        )?;
        writeln!(f, "tokens per chunk before expansion:")?;
        write!(f, "{}", self.pre_expansion)?;
        writeln!(f, "tokens per chunk after expansion:")?;
        write!(f, "{}", self.post_expansion)
    }
}

const HISTOGRAM_BUCKET: usize = 25;

/// Chunks every essay in parallel. Essays that clean to empty text are
/// dropped and listed in the summary; output order follows the input.
pub fn preprocess(essays: &[Essay], plan: ChunkPlan) -> Result<(Vec<Chunk>, PreprocessSummary)> {
    let chunker = Chunker::new(plan)?;
    let results: Vec<_> = essays.par_iter().map(|e| chunker.chunk(&e.author_id, &e.text)).collect();
    let mut summary = PreprocessSummary {
        essays: essays.len(),
        chunks: 0,
        dropped: Vec::new(),
        max_pre_expansion_tokens: 0,
        max_post_expansion_tokens: 0,
        pre_expansion: Histogram::new(HISTOGRAM_BUCKET),
        post_expansion: Histogram::new(HISTOGRAM_BUCKET),
    };
    let mut chunks = Vec::new();
    for (essay, result) in essays.iter().zip(results) {
        match result {
            Ok(cs) => chunks.extend(cs),
            Err(persona_core::Error::EmptyEssay { .. }) => summary.dropped.push(essay.author_id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    for c in &chunks {
        summary.pre_expansion.add(c.pre_expansion_tokens);
        summary.post_expansion.add(c.token_count());
        summary.max_pre_expansion_tokens = summary.max_pre_expansion_tokens.max(c.pre_expansion_tokens);
        summary.max_post_expansion_tokens = summary.max_post_expansion_tokens.max(c.token_count());
    }
    summary.chunks = chunks.len();
    Ok((chunks, summary))
}
