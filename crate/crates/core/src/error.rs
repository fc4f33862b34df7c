use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-canonical sparse matrix: {0}")]
    NonCanonical(String),

    #[error("class id {class} out of range for {num_classes} classes (node {node})")]
    ClassOutOfRange {
        node: usize,
        class: usize,
        num_classes: usize,
    },

    #[error("invalid metapath {path}: {msg}")]
    Metapath { path: String, msg: String },

    #[error("metapath hop count {hops} exceeds the enumeration bound {bound}")]
    HopBound { hops: usize, bound: usize },

    #[error("model input mismatch: {0}")]
    InputMismatch(String),

    #[error("node {0} in batch has no label")]
    UnlabeledRow(usize),

    #[error("evaluation mask is empty")]
    EmptyMask,

    #[error("training split is empty")]
    EmptyTrainSplit,

    #[error("training diverged at epoch {0}: non-finite loss or parameters")]
    Diverged(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("graph hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("invalid file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Synthetic(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
