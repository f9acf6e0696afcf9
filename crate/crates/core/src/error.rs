use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("PNG decode failed: {0}")]
    Decode(String),

    #[error("PNG encode failed: {0}")]
    Encode(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid dimensions: {0}")]
    InvalidDimension(String),

    #[error("invalid channel count: expected {expected}, got {actual}")]
    InvalidChannel { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("division by zero at row {row}, column {col}")]
    DivisionByZero { row: usize, col: usize },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("unpaired low-light files: {}", .0.join(", "))]
    Pairing(Vec<String>),

    #[error("data error in pair '{name}': {reason}")]
    Data { name: String, reason: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Whether the error comes from arithmetic blowing up rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::DivisionByZero { .. } | Error::NonFinite(_))
    }
}
