//! Crate-wide error type and exit-code classification.

use crate::candidate::Method;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: io error: {source}")]
    IoPath {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed record in a line-oriented input file. Carries the 1-based line number.
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("unknown entity id {0:?}")]
    UnknownId(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("{path}: truncated file: {msg}")]
    Truncated { path: String, msg: String },

    #[error("span [{start}, {end}) out of range for text of {len} characters")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("span surface {surface:?} does not match text slice {actual:?}")]
    SurfaceMismatch { surface: String, actual: String },

    #[error("candidate sets refer to different spans: {a} vs {b}")]
    SpanMismatch { a: String, b: String },

    #[error("no {0} backend configured")]
    MissingBackend(Method),

    #[error("no precomputed vector for id {0:?}")]
    MissingVector(String),

    #[error("approximate index recall {measured:.4} below floor {floor:.4}")]
    RecallFloor { measured: f64, floor: f64 },

    /// Configuration validation failure; maps to exit code 1.
    #[error("config: {field}: {msg}")]
    Config { field: String, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn malformed(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::MalformedRecord {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io_path(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::IoPath {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 1 for validation failures, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            _ => 2,
        }
    }
}
