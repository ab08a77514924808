//! Crate-wide error type.

use thiserror::Error;

/// Unified error for loading, validation and computation.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON or wrong document shape.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// A structurally valid document that violates a model constraint.
    /// `location` names the offending field or key.
    #[error("invalid input at {location}: {message}")]
    Validation { location: String, message: String },

    /// An enumeration would exceed the configured size cap.
    #[error("{what} would enumerate {size} items, exceeding the cap of {cap}")]
    SizeGuard {
        what: String,
        size: u128,
        cap: u128,
    },

    /// An iterative computation failed to reach its tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    /// A simulation-side estimator was given nothing to work with.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A precondition on a verified input was not met.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// File system trouble while reading or writing documents.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
