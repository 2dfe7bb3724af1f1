use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in document {index}: {message}")]
    DocumentParse { index: usize, message: String },

    #[error("schema error in document {index}: {message}")]
    DocumentSchema { index: usize, message: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("invalid instance {doc_id}: {reason}")]
    InvalidInstance { doc_id: String, reason: String },

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("sequence of length {len} exceeds model maximum {max}")]
    LengthOverflow { len: usize, max: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("deeplift has no rescale rule for layer(s): {}", .0.join(", "))]
    UnsupportedLayer(Vec<String>),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("target class {class} outside label space of size {label_count}")]
    TargetClass { class: usize, label_count: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-parsable tag for the error kind.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::DocumentParse { .. } | Error::Parse(_) | Error::Json(_) => "parse",
            Error::DocumentSchema { .. } => "schema",
            Error::InvalidInstance { .. } => "invalid-instance",
            Error::Config { .. } => "config",
            Error::Encoding(_) => "encoding",
            Error::LengthOverflow { .. } => "length-overflow",
            Error::Shape { .. } => "shape",
            Error::UnsupportedMethod(_) => "unsupported-method",
            Error::UnsupportedLayer(_) => "unsupported-layer",
            Error::UnsupportedCombination(_) => "unsupported-combination",
            Error::TargetClass { .. } => "target-class",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Empty(_) => "empty-input",
            Error::Undefined(_) => "undefined-result",
            Error::MissingArtifact(_) => "missing-artifact",
        }
    }
}
