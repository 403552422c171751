//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// NaN or infinity appeared where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed or unsupported NPY payload.
    #[error("npy: {0}")]
    Npy(String),

    /// Malformed or unsupported ZIP container.
    #[error("zip: {0}")]
    Zip(String),

    /// Inconsistent or invalid dataset contents.
    #[error("data: {0}")]
    Data(String),

    /// Training diverged or produced unusable numbers.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
