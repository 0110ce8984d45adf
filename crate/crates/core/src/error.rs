use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the toolkit. Every variant maps to a stable category
/// string via [`Error::category`] so callers can match on failures without
/// parsing messages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("corrupt header: {0}")]
    Header(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("unknown dtype tag `{0}`")]
    UnknownDtype(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("model error: {0}")]
    Model(String),
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Header(_) => "header",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::UnknownDtype(_) => "unknown_dtype",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidData(_) => "invalid_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Degenerate(_) => "degenerate",
            Error::Csv(_) => "csv",
            Error::Model(_) => "model",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
