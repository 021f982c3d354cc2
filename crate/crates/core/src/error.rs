use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("value {value} outside the {space} range at index {index}")]
    OutOfRange {
        value: f32,
        space: &'static str,
        index: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("image {height}x{width} is too small: {requirement}")]
    TooSmall {
        height: usize,
        width: usize,
        requirement: String,
    },

    #[error("wrong intensity space: expected {expected}, got {actual}")]
    WrongSpace {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("theta {0} outside [0, 1]")]
    ThetaOutOfRange(f64),

    #[error("finite-difference stencil [{theta} - {h}/2, {theta} + {h}/2] leaves [0, 1]")]
    StencilOutOfRange { theta: f64, h: f64 },

    #[error("bad magic bytes in {}", path.display())]
    BadMagic { path: PathBuf },

    #[error("truncated payload in {}: expected {expected} bytes, found {actual}", path.display())]
    TruncatedPayload {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("header mismatch in {}: {reason}", path.display())]
    HeaderMismatch { path: PathBuf, reason: String },

    #[error("non-finite {term} loss at step {step}")]
    NonFiniteLoss { term: &'static str, step: u64 },

    #[error("checkpoint {}: {reason}", path.display())]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("png export to {}: {source}", path.display())]
    Png {
        path: PathBuf,
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }
}
