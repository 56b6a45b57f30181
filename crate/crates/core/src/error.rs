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

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("unsupported version {version} in {path}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("truncated payload in {path}: header declares {declared} elements, payload holds {actual}")]
    TruncatedPayload {
        path: PathBuf,
        declared: u64,
        actual: u64,
    },

    #[error("element count mismatch in {path}: header declares {declared}, found {actual} bytes of payload")]
    CountMismatch {
        path: PathBuf,
        declared: u64,
        actual: u64,
    },

    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("malformed sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },

    #[error("insufficient data: need at least {needed} usable samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("{name} out of domain: {message}")]
    Domain { name: &'static str, message: String },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("infeasible sparsity: left-mode ratio {left_ratio} must be below target {target}")]
    InfeasibleSparsity { left_ratio: f64, target: f64 },

    #[error("codec error: {0}")]
    Codec(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),
}

impl Error {
    pub(crate) fn domain(name: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            name,
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
