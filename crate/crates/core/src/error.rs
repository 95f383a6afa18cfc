//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::nn::EpochRecord;

/// Errors produced anywhere in the benchmark library.
#[derive(Debug, Error)]
pub enum Error {
    /// An input record failed validation (bad population, negative counts, ...).
    #[error("rejected record: {0}")]
    RejectedRecord(String),

    /// A series is too short for the requested operation.
    #[error("insufficient history: need at least {needed} points, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    /// Invalid argument or configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value transform could not be applied (e.g. Box-Cox on y + shift <= 0).
    #[error("transform error: {0}")]
    Transform(String),

    /// A score is undefined for the given inputs (e.g. MAPE with all-zero actuals).
    #[error("score undefined: {0}")]
    UndefinedScore(String),

    /// A malformed row in an input file, with its 1-based line number.
    #[error("ingest error at line {line}: {msg}")]
    Ingest { line: u64, msg: String },

    /// Mismatched dimensions between tensors or sample vectors.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// NaN or infinity showed up where finite values are required.
    #[error("non-finite value in {context} (step {step})")]
    NonFinite { context: String, step: usize },

    /// Training aborted because the validation loss went non-finite.
    /// Carries the per-epoch history collected up to the failing epoch.
    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        history: Vec<EpochRecord>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an io::Error together with the path it concerns.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
