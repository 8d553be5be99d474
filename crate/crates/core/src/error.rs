//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the FDIA library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or matrix shapes do not conform.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An operation was called outside its contract (bad arguments,
    /// wrong formulation, missing prerequisite step).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value is invalid or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Dataset ingestion failed; names the offending row/column where known.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A numeric failure (non-finite loss or gradient, divergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Checkpoint file is corrupt, truncated, or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A metric is undefined for the given input (e.g. single-class labels).
    #[error("undefined metric: {0}")]
    Metric(String),

    /// Threshold calibration could not run.
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    /// The CLI maps these to exit code 2, everything else to 4.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Usage(_) | Error::Config(_) | Error::Ingestion(_) | Error::Dimension(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
