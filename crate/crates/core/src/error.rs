use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("essay {author_id:?} is empty after cleaning")]
    EmptyEssay { author_id: String },
    #[error("contraction table line {line}: {reason}")]
    InvalidContractionTable { line: usize, reason: &'static str },
    #[error("invalid chunk plan: {0}")]
    InvalidPlan(&'static str),
    #[error("layer index {index} out of range for a record with {n_layers} layers")]
    LayerOutOfRange { index: usize, n_layers: usize },
    #[error("layer selector needs at least {needed} layers, record has {n_layers}")]
    TooFewLayers { needed: usize, n_layers: usize },
    #[error("record ({author_id}, {chunk_index}) has no per-sentence embeddings")]
    MissingSentenceEmbeddings { author_id: String, chunk_index: u32 },
    #[error("invalid embedding record ({author_id}, {chunk_index}): {reason}")]
    InvalidEmbedding { author_id: String, chunk_index: u32, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot fit on an empty training set")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid SVM problem: {0}")]
    InvalidProblem(String),
    #[error("invalid SVM model: {0}")]
    InvalidModel(String),
    #[error("bootstrap sample for bag {bag_id} stayed single-class after {retries} retries")]
    BootstrapExhausted { bag_id: usize, retries: usize },
    #[error("bootstrap sample size must be at least 1")]
    EmptyBootstrap,
    #[error("an ensemble needs at least one estimator")]
    NoEstimators,
    #[error("cannot vote on an empty list of chunks")]
    NoChunks,
    #[error("cannot split {n} essays into {k} folds")]
    InvalidFoldCount { k: usize, n: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown trait {0:?} (expected one of EXT, NEU, AGR, CON, OPN)")]
    UnknownTrait(String),
}

pub type Result<T> = core::result::Result<T, Error>;
