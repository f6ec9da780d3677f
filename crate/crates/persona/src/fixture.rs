//! Synthetic corpora with label signal injected into embeddings and
//! psycholinguistic features, for tests and demos without the real dataset.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use persona_core::embedding::{ChunkEmbeddingSet, SentenceEmbedding};
use persona_core::features::PSYCHO_FEATURES;
use persona_core::textprep::ChunkPlan;
use persona_core::{Essay, PersonalityTrait, TraitLabels};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ceb::{write_embeddings, Layout};
use crate::chunks::{preprocess, save_chunks, StoredChunk};
use crate::config::RunConfig;
use crate::corpus::{write_essays, PsychoFeatures};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub n_essays: usize,
    pub seed: u64,
    pub n_layers: usize,
    pub dim: usize,
    pub static_dim: usize,
    pub per_sentence: bool,
    /// Strength of the label direction relative to unit noise.
    pub signal: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_essays: 50,
            seed: 0,
            n_layers: 13,
            dim: 768,
            static_dim: 300,
            per_sentence: false,
            signal: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub essays: Vec<Essay>,
    pub psycho: Vec<PsychoFeatures>,
    pub chunks: Vec<StoredChunk>,
    pub contextual: Vec<ChunkEmbeddingSet>,
    pub static_vectors: Vec<ChunkEmbeddingSet>,
}

const WORDS: &[&str] = &[
    "I", "think", "today", "class", "really", "feel", "my", "friends", "and", "the", "room", "is", "quiet", "music",
    "tired", "happy", "about", "what", "next", "week", "home", "people", "always", "never", "maybe", "write", "time",
    "school", "morning", "night", "work", "hard", "good", "strange", "mom", "call", "later", "dinner", "game",
    "weekend", "roommate", "test", "study", "sleep", "coffee", "wonder", "talk", "walk", "rain", "sun",
];
const CONTRACTIONS: &[&str] = &["you're", "don't", "it's", "I'm", "can't", "won't", "they've", "I'll", "we'd", "isn't"];

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn essay_text(rng: &mut ChaCha8Rng) -> String {
    let n_sentences = rng.random_range(3..30);
    let mut out = Vec::new();
    for _ in 0..n_sentences {
        let len = rng.random_range(3..25);
        let mut words: Vec<String> = (0..len)
            .map(|_| {
                if rng.random_bool(0.08) {
                    CONTRACTIONS[rng.random_range(0..CONTRACTIONS.len())].to_string()
                } else {
                    WORDS[rng.random_range(0..WORDS.len())].to_string()
                }
            })
            .collect();
        if rng.random_bool(0.2) {
            let i = rng.random_range(0..words.len());
            words[i].push(',');
        }
        let end = match rng.random_range(0..10) {
            0 => "?",
            1 => "!.",
            _ => ".",
        };
        out.push(format!("{}{end}", words.join(" ")));
    }
    out.join(" ")
}

fn label_sign(labels: &TraitLabels, t: PersonalityTrait) -> f64 {
    if labels.get(t) {
        1.0
    } else {
        -1.0
    }
}

/// Per-trait random directions in `dim` dimensions.
fn directions(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    (0..5).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect()
}

fn signal_vector(dirs: &[Vec<f64>], labels: &TraitLabels, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for t in PersonalityTrait::ALL {
        let s = label_sign(labels, t);
        for (o, d) in v.iter_mut().zip(&dirs[t.index()]) {
            *o += s * d;
        }
    }
    v
}

fn matrix(rng: &mut ChaCha8Rng, base: &[f64], n_layers: usize, strength: f64) -> Vec<f64> {
    let dim = base.len();
    let mut m = Vec::with_capacity(n_layers * dim);
    for l in 0..n_layers {
        // Deeper layers carry more of the label signal.
        let w = strength * (l + 1) as f64 / n_layers as f64;
        m.extend(base.iter().map(|b| normal(rng) + w * b));
    }
    m
}

fn embed(
    rng: &mut ChaCha8Rng,
    chunk: &StoredChunk,
    base: &[f64],
    n_layers: usize,
    strength: f64,
    per_sentence: bool,
) -> ChunkEmbeddingSet {
    let dim = base.len();
    let n_tokens = chunk.token_count() as u32;
    let (layers, sentences) = if per_sentence {
        let mut weighted = vec![0.0f64; n_layers * dim];
        let mut sentences = Vec::with_capacity(chunk.sentences.len());
        for s in &chunk.sentences {
            let m: Vec<f32> = matrix(rng, base, n_layers, strength).into_iter().map(|v| v as f32).collect();
            for (w, v) in weighted.iter_mut().zip(&m) {
                *w += s.len() as f64 * f64::from(*v);
            }
            sentences.push(SentenceEmbedding { n_tokens: s.len() as u32, layers: m });
        }
        let total = f64::from(n_tokens);
        (weighted.into_iter().map(|w| (w / total) as f32).collect(), Some(sentences))
    } else {
        (matrix(rng, base, n_layers, strength).into_iter().map(|v| v as f32).collect(), None)
    };
    ChunkEmbeddingSet {
        author_id: chunk.author_id.clone(),
        chunk_index: chunk.chunk_index,
        n_layers,
        dim,
        layers,
        n_tokens_pooled: n_tokens,
        per_sentence: sentences,
    }
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut essays: Vec<Essay> = (0..spec.n_essays)
        .map(|i| {
            let mut labels = TraitLabels::default();
            for t in PersonalityTrait::ALL {
                labels.set(t, rng.random_bool(0.5));
            }
            Essay { author_id: format!("fx{i:04}"), text: essay_text(&mut rng), labels }
        })
        .collect();
    // Every trait needs both classes.
    if essays.len() >= 2 {
        for t in PersonalityTrait::ALL {
            if essays.iter().all(|e| e.labels.get(t) == essays[0].labels.get(t)) {
                let flipped = !essays[0].labels.get(t);
                essays[0].labels.set(t, flipped);
            }
        }
    }

    let psycho_dirs = directions(&mut rng, PSYCHO_FEATURES);
    let scales: Vec<f64> = (0..PSYCHO_FEATURES).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
    let psycho = essays
        .iter()
        .map(|e| {
            let s = signal_vector(&psycho_dirs, &e.labels, PSYCHO_FEATURES);
            let values = s.iter().zip(&scales).map(|(s, sc)| sc * (normal(&mut rng) + spec.signal * s)).collect();
            PsychoFeatures { author_id: e.author_id.clone(), values }
        })
        .collect();

    let (chunks, _) = preprocess(&essays, ChunkPlan::default())?;
    let chunks: Vec<StoredChunk> = chunks.iter().map(StoredChunk::from).collect();
    let ctx_dirs = directions(&mut rng, spec.dim);
    let static_dirs = directions(&mut rng, spec.static_dim);
    let mut contextual = Vec::with_capacity(chunks.len());
    let mut static_vectors = Vec::with_capacity(chunks.len());
    for c in &chunks {
        let essay = essays.iter().find(|e| e.author_id == c.author_id).expect("chunk of a known essay");
        let base = signal_vector(&ctx_dirs, &essay.labels, spec.dim);
        contextual.push(embed(&mut rng, c, &base, spec.n_layers, spec.signal, spec.per_sentence));
        let base = signal_vector(&static_dirs, &essay.labels, spec.static_dim);
        static_vectors.push(embed(&mut rng, c, &base, 1, spec.signal * 0.5, false));
    }
    Ok(Fixture { essays, psycho, chunks, contextual, static_vectors })
}

/// File locations of a written fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub essays_csv: PathBuf,
    pub psycho_csv: PathBuf,
    pub chunks_jsonl: PathBuf,
    pub embeddings_ceb: PathBuf,
    pub static_ceb: PathBuf,
    pub config_json: PathBuf,
}

pub fn write_psycho(path: &Path, rows: &[PsychoFeatures]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| Error::io(path, e.into());
    let mut header = vec!["#AUTHID".to_string()];
    header.extend((0..PSYCHO_FEATURES).map(|i| format!("f{i:02}")));
    w.write_record(&header).map_err(io_err)?;
    for r in rows {
        let mut row = vec![r.author_id.clone()];
        row.extend(r.values.iter().map(f64::to_string));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every fixture file into `dir` together with a run configuration
/// pointing at them.
pub fn write_fixture(dir: &Path, fx: &Fixture) -> Result<FixturePaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = FixturePaths {
        essays_csv: dir.join("essays.csv"),
        psycho_csv: dir.join("psycho.csv"),
        chunks_jsonl: dir.join("chunks.jsonl"),
        embeddings_ceb: dir.join("embeddings.ceb"),
        static_ceb: dir.join("static.ceb"),
        config_json: dir.join("config.json"),
    };
    let file = File::create(&paths.essays_csv).map_err(|e| Error::io(&paths.essays_csv, e))?;
    write_essays(BufWriter::new(file), &fx.essays).map_err(|e| Error::io(&paths.essays_csv, e.into()))?;
    write_psycho(&paths.psycho_csv, &fx.psycho)?;
    save_chunks(&paths.chunks_jsonl, &fx.chunks)?;
    if let Some(first) = fx.contextual.first() {
        write_embeddings(&paths.embeddings_ceb, Layout::of(first), &fx.contextual)?;
        write_embeddings(&paths.static_ceb, Layout::of(&fx.static_vectors[0]), &fx.static_vectors)?;
    }
    let mut config = RunConfig::default();
    config.paths.essays_csv = Some(paths.essays_csv.clone());
    config.paths.psycho_csv = Some(paths.psycho_csv.clone());
    config.paths.chunks_jsonl = Some(paths.chunks_jsonl.clone());
    config.paths.embeddings_ceb = Some(paths.embeddings_ceb.clone());
    config.paths.static_ceb = Some(paths.static_ceb.clone());
    config.paths.model_dir = Some(dir.join("models"));
    config.paths.report_json = Some(dir.join("report.json"));
    let text = serde_json::to_string_pretty(&config).expect("config serializes");
    std::fs::write(&paths.config_json, text).map_err(|e| Error::io(&paths.config_json, e))?;
    Ok(paths)
}
