use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the solvers, estimators and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid objective evaluation: {value} at index {index}")]
    InvalidEvaluation { index: usize, value: f64 },

    #[error("invalid objective evaluation at sample {sample}: {value}")]
    InvalidSample { sample: usize, value: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("singular fit: all abscissae are equal")]
    SingularFit,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite coordinate {value} at position {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid config `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("problem `{0}` is not a {1} objective")]
    WrongProblemKind(String, &'static str),

    #[error("sweep requires known minimum (problem `{0}` has none)")]
    NoKnownMinimum(String),

    #[error("joint fast path requires separable functional")]
    NotSeparable,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
