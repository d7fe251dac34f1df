//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by constructors, preconditions, and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix dimensions do not match the shape contract of an operation.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A group element or linear system is singular where invertibility is required.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A sampler exhausted its attempt budget.
    #[error("sampling failed: {0}")]
    Sampling(String),

    /// An iterative routine failed to make progress.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration values outside their admissible ranges.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// I/O or serialization failure in the batch drivers.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed JSON record.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
