use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the diarization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("unsupported encoding: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("segment too short: {0}")]
    Duration(String),
    #[error("out of bounds: {0}")]
    Bounds(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate embedding at segment {index}: zero norm")]
    DegenerateEmbedding { index: usize },
    #[error("ill-conditioned system: {0}")]
    Conditioning(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("recording mismatch: {0}")]
    RecordingMismatch(String),
}

/// Coarse error classes, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Conditioning(_) | Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
