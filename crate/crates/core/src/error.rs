use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("box {bbox:?} lies outside a {width}x{height} field")]
    OutOfBounds {
        bbox: (u32, u32, u32, u32),
        width: usize,
        height: usize,
    },

    #[error("empty field")]
    EmptyField,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bad flow file magic {0}")]
    BadMagic(f32),

    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error(
        "too few overlapping pairs for density estimation ({0}); fall back to uniform affinity"
    )]
    TooFewPairs(usize),

    #[error("empty cluster descriptor")]
    EmptyDescriptor,

    #[error("unknown cluster id {0}")]
    UnknownCluster(u64),

    #[error("no proposals were processed")]
    NoProposals,

    #[error("classifier failure: {0}")]
    Classifier(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("mismatched evaluation inputs: {0}")]
    EvalMismatch(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
