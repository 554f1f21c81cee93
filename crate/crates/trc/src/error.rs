//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants are
//! grouped by the kind of failure rather than by module, so callers can match
//! on what went wrong (bad input data, shape mismatch, numerical breakdown,
//! model-state misuse, ...) without caring where it happened.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cell in the input data could not be interpreted. `row` is the
    /// 1-based data row (the header does not count).
    #[error("ingestion error at row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    /// Schema construction or schema/data consistency failure.
    #[error("schema error: {0}")]
    Schema(String),

    /// Operands of a tensor operation do not line up.
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: String, details: String },

    /// An operation produced NaN or infinity.
    #[error("non-finite values produced by {0}")]
    NonFinite(String),

    /// A caller-supplied value is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative numerical routine failed to converge or broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A model was used in a state that does not support the operation
    /// (backward before forward, stepping a frozen network, ...).
    #[error("model state error: {0}")]
    ModelState(String),

    /// Persisted artifacts are missing, corrupt, or inconsistent with the
    /// objects they are being attached to.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Experiment configuration is invalid or incomplete.
    #[error("config error: {0}")]
    Config(String),

    /// A statistical test was handed data it cannot process.
    #[error("statistics error: {0}")]
    Stats(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        source: Box<csv::Error>,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl Error {
    pub fn shape(op: impl Into<String>, details: impl Into<String>) -> Self {
        Error::Shape {
            op: op.into(),
            details: details.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
