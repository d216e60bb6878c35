use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the depth pipeline, qualified by the module that produced them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("render: camera pose is not inside the tube ({0})")]
    Pose(String),

    #[error("render: generation failed: {0}")]
    Generation(String),

    #[error("dataset: {message} ({completed} frames written before failure)")]
    Dataset { message: String, completed: usize },

    #[error("{module}: invalid parameter: {message}")]
    Parameter { module: &'static str, message: String },

    #[error("{module}: dimension mismatch: expected {expected}, got {got}")]
    Dimension {
        module: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("superpixel: graph has no nodes with ground-truth depth")]
    EmptyGraph,

    #[error("data: {0}")]
    Data(String),

    #[error("train: non-finite gradient in parameter block `{0}`")]
    Divergence(String),

    #[error("unary: contract violation: {0}")]
    Contract(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io: malformed {kind} file {path}: {message}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        message: String,
    },

    #[error("io: image/depth pair mismatch: {image} is {image_dims:?} but {depth} is {depth_dims:?}")]
    Pairing {
        image: PathBuf,
        depth: PathBuf,
        image_dims: (usize, usize),
        depth_dims: (usize, usize),
    },

    #[error("io: manifest references missing file {0}")]
    MissingFile(PathBuf),

    #[error("checkpoint: unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("checkpoint: content hash mismatch")]
    HashMismatch,

    #[error("checkpoint: truncated file ({got} of {expected} bytes)")]
    Truncated { expected: usize, got: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn param(module: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            module,
            message: message.into(),
        }
    }

    pub fn dim(module: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            module,
            expected,
            got,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Config(_) | Error::Parameter { .. } => ErrorClass::Config,
            Error::Divergence(_) | Error::Contract(_) | Error::Dimension { .. } => {
                ErrorClass::Numeric
            }
            Error::Io { .. } | Error::Dataset { .. } => ErrorClass::Io,
            _ => ErrorClass::Data,
        }
    }
}
