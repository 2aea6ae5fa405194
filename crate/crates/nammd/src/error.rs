//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by kernel evaluation, estimators, tests, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Two points or samples do not share a dimension.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Two samples do not share a size (equal sizes are required throughout).
    #[error("sample size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    /// An input value failed validation (non-finite entry, bad parameter, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Inputs are valid but degenerate for the requested operation
    /// (e.g. all pooled points identical for the median heuristic).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A requested construction target cannot be met.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Bad test or experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Failure while parsing an input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
