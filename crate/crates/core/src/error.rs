use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes. The CLI maps each one to an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Configuration,
    Parse,
    Divergence,
    Degenerate,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Configuration => "configuration",
            ErrorCategory::Parse => "parse",
            ErrorCategory::Divergence => "divergence",
            ErrorCategory::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("embedding file: {0}")]
    EmbeddingLoad(#[from] LoadError),

    #[error("metadata text is empty after normalization")]
    EmptyMetadata,

    #[error("vector norm {0:e} is too small to normalize")]
    DegenerateVector(f64),

    #[error("user {0} has interacted with every candidate item")]
    SamplingExhausted(u32),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate:e})")]
    Divergence { epoch: usize, learning_rate: f64 },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("empty dataset: no interactions")]
    EmptyDataset,

    #[error("no evaluable users")]
    EmptyEvaluation,

    #[error("undefined metric: relevant set is empty")]
    UndefinedMetric,

    #[error("degenerate projection: {0}")]
    DegenerateProjection(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Distinct embedding-file failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("file truncated: expected {expected} rows, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("row count {file} does not match vocabulary size {vocab}")]
    RowCount { file: usize, vocab: usize },
    #[error("vocabulary hash {file:016x} does not match {vocab:016x}")]
    HashMismatch { file: u64, vocab: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, message: message.into() }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) => ErrorCategory::Configuration,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::UnknownToken(_)
            | Error::EmbeddingLoad(_)
            | Error::Io { .. } => ErrorCategory::Parse,
            Error::Divergence { .. } => ErrorCategory::Divergence,
            Error::EmptyMetadata
            | Error::DegenerateVector(_)
            | Error::SamplingExhausted(_)
            | Error::DegenerateSplit(_)
            | Error::EmptyDataset
            | Error::EmptyEvaluation
            | Error::UndefinedMetric
            | Error::DegenerateProjection(_) => ErrorCategory::Degenerate,
            Error::Trial { source, .. } => source.category(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
