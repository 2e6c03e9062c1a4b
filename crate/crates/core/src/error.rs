//! Error types shared across the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad hyperparameter, degenerate training setup).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or degenerate input data.
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// Fewer distinct points than requested clusters, all-identical labels, etc.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Metric has no defined value on this input (e.g. zero phone entropy).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("vocab size {requested} too small: needs at least {needed}")]
    VocabTooSmall { needed: usize, requested: usize },

    #[error("token id {token} out of range for vocab of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    /// Non-finite loss or gradient; carries the offending tensor or step.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Unparseable or schema-mismatched file content.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
