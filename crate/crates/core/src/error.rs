use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the lip-sync engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported audio format: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("phone transcription line {line}: {message}")]
    Phn { line: usize, message: String },

    #[error("unknown phone label(s): {0}")]
    UnknownPhone(String),

    #[error("unknown viseme: {0}")]
    UnknownViseme(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoBare(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's JSON error output and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) | Error::Wav(_) => "format",
            Error::Dimension(_) | Error::LengthMismatch { .. } => "dimension",
            Error::Empty(_) => "empty",
            Error::Config(_) => "config",
            Error::Phn { .. } => "phn",
            Error::UnknownPhone(_) => "unknown_phone",
            Error::UnknownViseme(_) => "unknown_viseme",
            Error::Corpus(_) => "corpus",
            Error::Diverged(_) => "diverged",
            Error::ModelFile(_) => "model_file",
            Error::Io { .. } | Error::IoBare(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
