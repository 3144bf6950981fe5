//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes (or an axis) are incompatible with the requested operation.
    #[error("invalid shape: {0}")]
    Shape(String),

    /// Input outside the mathematical domain of an operation (log of a
    /// non-positive number, digamma at x <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An API contract was violated (e.g. backward on a non-scalar value).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// A label index is out of range for the number of classes.
    #[error("invalid label: index {index} >= {classes} classes")]
    InvalidLabel { index: usize, classes: usize },

    /// An operation that needs labeled samples received none.
    #[error("empty batch: {0}")]
    EmptyBatch(String),

    /// A surface-distance metric is undefined (empty mask).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Aggregate evaluation could not produce a result.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A binary file did not match its expected format.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// Training diverged; carries the diagnostic record of the offending step.
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFinite { iteration: usize, detail: String },

    /// I/O failure, with the path that triggered it.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an I/O failure with the path it happened on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
