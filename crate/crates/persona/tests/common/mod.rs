#![allow(dead_code)]

use std::io::Cursor;

use persona::ceb::{CebWriter, Layout};
use persona_core::embedding::{ChunkEmbeddingSet, SentenceEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random records with distinct keys; values span several orders of
/// magnitude and include signed zeros and subnormals.
pub fn random_records(n: usize, layout: Layout, seed: u64) -> Vec<ChunkEmbeddingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = layout.n_layers * layout.dim;
    let value = |rng: &mut ChaCha8Rng| -> f32 {
        match rng.random_range(0..10) {
            0 => -0.0,
            1 => f32::from_bits(rng.random_range(1..0x0080_0000)),
            _ => rng.random_range(-1.0f32..1.0) * 10f32.powi(rng.random_range(-6..6)),
        }
    };
    (0..n)
        .map(|i| {
            let author_id = format!("author-{}-é{}", i / 4, "x".repeat(rng.random_range(0..20)));
            let per_sentence = layout.per_sentence.then(|| {
                (0..rng.random_range(1..4))
                    .map(|_| SentenceEmbedding {
                        n_tokens: rng.random_range(1..40),
                        layers: (0..size).map(|_| rng.random_range(-2.0f32..2.0)).collect(),
                    })
                    .collect::<Vec<_>>()
            });
            let layers = match &per_sentence {
                Some(s) => token_weighted_mean(s, size),
                None => (0..size).map(|_| value(&mut rng)).collect(),
            };
            ChunkEmbeddingSet {
                author_id,
                chunk_index: (i % 4) as u32,
                n_layers: layout.n_layers,
                dim: layout.dim,
                layers,
                n_tokens_pooled: rng.random_range(1..300),
                per_sentence,
            }
        })
        .collect()
}

fn token_weighted_mean(sentences: &[SentenceEmbedding], size: usize) -> Vec<f32> {
    let total: f64 = sentences.iter().map(|s| f64::from(s.n_tokens)).sum();
    (0..size)
        .map(|j| {
            let sum: f64 = sentences.iter().map(|s| f64::from(s.n_tokens) * f64::from(s.layers[j])).sum();
            (sum / total) as f32
        })
        .collect()
}

pub fn encode(layout: Layout, records: &[ChunkEmbeddingSet]) -> Vec<u8> {
    let mut w = CebWriter::new(Cursor::new(Vec::new()), layout).unwrap();
    for r in records {
        w.write(r).unwrap();
    }
    w.finish().unwrap().into_inner()
}

pub fn bits(r: &ChunkEmbeddingSet) -> Vec<u32> {
    let mut out: Vec<u32> = r.layers.iter().map(|v| v.to_bits()).collect();
    for s in r.per_sentence.iter().flatten() {
        out.push(s.n_tokens);
        out.extend(s.layers.iter().map(|v| v.to_bits()));
    }
    out
}

/// Offset of the first f32 of the first record's chunk matrix.
pub fn first_value_offset(records: &[ChunkEmbeddingSet]) -> usize {
    24 + 2 + records[0].author_id.len() + 4 + 4
}
