use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape {shape:?} holds {expected} elements but {got} values were supplied")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("stream truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated { offset: usize, needed: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown layer kind code {code} at byte offset {offset}")]
    UnknownKind { code: u8, offset: usize },
    #[error("malformed file: {0}")]
    Format(String),

    #[error("layer {layer} ({name}): {reason}")]
    LayerShape {
        layer: usize,
        name: String,
        reason: String,
    },
    #[error("invalid model: {0}")]
    Model(String),
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },
    #[error("trace was not produced by this model")]
    TraceMismatch,
    #[error("layer {0} is not a convolution")]
    NotConv(usize),
    #[error("size guard exceeded: {what} needs {needed} entries, limit is {limit}")]
    SizeGuard {
        what: &'static str,
        needed: usize,
        limit: usize,
    },
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
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

    /// True for failures caused by numeric breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}
