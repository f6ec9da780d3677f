use std::io;
use std::path::PathBuf;

use persona_core::embedding::CoverageReport;

use crate::ceb::CebError;

/// Process exit codes.
pub mod exit {
    pub const USAGE: i32 = 1;
    pub const INGESTION: i32 = 2;
    pub const INTEGRITY: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{}: {message}", path.display())]
    Ingest { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Embeddings {
        path: PathBuf,
        #[source]
        source: CebError,
    },
    #[error("{}: {message}", path.display())]
    Chunks { path: PathBuf, message: String },
    #[error("coverage check failed: {}", describe_coverage(.0))]
    Coverage(CoverageReport),
    #[error("{}: {message}", path.display())]
    Model { path: PathBuf, message: String },
    #[error("{trait_code} fold {fold}: authors in both train and test split: {authors:?}")]
    Leakage { trait_code: &'static str, fold: usize, authors: Vec<String> },
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] persona_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn describe_coverage(report: &CoverageReport) -> String {
    let list = |keys: &[persona_core::embedding::ChunkKey]| {
        keys.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
    };
    let mut parts = Vec::new();
    if !report.missing.is_empty() {
        parts.push(format!("{} chunk(s) without embeddings: {}", report.missing.len(), list(&report.missing)));
    }
    if !report.orphans.is_empty() {
        parts.push(format!("{} embedding record(s) without chunks: {}", report.orphans.len(), list(&report.orphans)));
    }
    parts.join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Row { .. } | Error::Ingest { .. } | Error::Model { .. } => exit::INGESTION,
            Error::Embeddings { .. } | Error::Chunks { .. } | Error::Coverage(_) | Error::Leakage { .. } => {
                exit::INTEGRITY
            }
            Error::Usage(_) | Error::Config(_) | Error::Core(_) => exit::USAGE,
        }
    }
}
