//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension mismatch between an input and what the operation expects.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// NaN or infinite value where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Class or feature index out of range.
    #[error("index out of range: {0}")]
    Index(String),

    /// A parameter combination the operation rejects (empty batch, k too
    /// large, zero sample count, and similar).
    #[error("invalid usage: {0}")]
    Usage(String),

    /// The operation is defined but not supported for this input (for
    /// example an exact Hessian above the dimension cap, or forward-mode
    /// second derivatives through a kinked activation).
    #[error("unsupported: {0}")]
    Capability(String),

    /// A Monte-Carlo or sampling procedure failed; carries the cause.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// Training diverged; names the epoch where the loss stopped being finite.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// An attack could not run on this input.
    #[error("attack failed: {0}")]
    Attack(String),

    /// A numeric routine (LP pivoting, power iteration) failed to make
    /// progress.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An invariant that should hold by construction was violated; indicates
    /// a bug rather than bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// A data file could not be ingested; locates the offending row/column.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A run configuration file is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Exit code the CLI maps this error to.
    ///
    /// 2 = usage/config error, 3 = runtime divergence, 4 = I/O failure,
    /// 1 = any other runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Shape(_) | Error::Index(_) => 2,
            Error::Training { .. } | Error::NonFinite(_) | Error::Attack(_) => 3,
            Error::Io(_) | Error::Ingestion(_) | Error::Json(_) | Error::Csv(_) => 4,
            _ => 1,
        }
    }
}
