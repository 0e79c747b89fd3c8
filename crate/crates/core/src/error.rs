use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate token {token:?} on lines {first_line} and {second_line}")]
    DuplicateToken {
        token: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("empty vocabulary entry on line {line}")]
    EmptyToken { line: usize },

    #[error("invalid vocabulary entry {token:?}: {reason}")]
    InvalidToken { token: String, reason: &'static str },

    #[error("unknown token {0:?} is not in the vocabulary")]
    MissingUnk(String),

    #[error("invalid UTF-8 on line {line}")]
    InvalidUtf8 { line: usize },

    #[error("language mismatch: {left} vs {right}")]
    LanguageMismatch { left: String, right: String },

    #[error("vocabulary fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("threshold mismatch: {left} vs {right}")]
    ThresholdMismatch { left: String, right: String },

    #[error("empty corpus for language {language:?}")]
    EmptyCorpus { language: String },

    #[error("invalid threshold {0:?}: expected a decimal in (0, 1]")]
    InvalidThreshold(String),

    #[error("invalid selection: {0}")]
    InvalidSelection(String),

    #[error("selected id {id} is out of range for a vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },

    #[error("tensor {name:?}: {reason}")]
    Tensor { name: String, reason: String },

    #[error("malformed tensor file: {0}")]
    Container(String),

    #[error("no tensor has a vocabulary axis of length {vocab_size}")]
    NothingToTrim { vocab_size: usize },

    #[error("invalid vocab-axis rule {0:?}")]
    InvalidRule(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn tensor(name: &str, reason: impl Into<String>) -> Self {
        Error::Tensor {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
