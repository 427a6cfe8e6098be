//! Error type shared by every module, plus the process exit-code mapping
//! used by the command-line front end.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("shape mismatch: header declares {expected} values, payload holds {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("row count mismatch for {what}: {left} vs {right}")]
    RowCountMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch for {what}: {left} vs {right}")]
    DimMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    #[error("label {label} at index {index} outside [0, {n_classes})")]
    LabelOutOfRange {
        index: usize,
        label: i64,
        n_classes: usize,
    },

    #[error("missing {0}")]
    MissingComponent(String),

    #[error("no in-distribution samples")]
    EmptyInD,

    #[error("zero-norm vector at row {0}")]
    ZeroVector(usize),

    #[error("k = {k} outside [1, {rows}]")]
    KOutOfRange { k: usize, rows: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("empty reference pool")]
    EmptyPool,

    #[error("class {class} has {size} samples, fewer than {shots} shots")]
    ShotsExceedClassSize { class: i64, size: usize, shots: usize },

    #[error("bad spec: {0}")]
    BadSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for IO failures, 3 for internal invariant
    /// violations, 2 for every validation or configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
