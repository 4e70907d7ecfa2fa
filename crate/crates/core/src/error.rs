//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("expected {expected} channel(s), got {actual}")]
    WrongChannelCount { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("JPEG quality {0} out of range 1..=100")]
    QualityOutOfRange(u32),
    #[error("JPEG encode error: {0}")]
    Encode(String),
    #[error("malformed JPEG stream: {0}")]
    MalformedStream(String),
    #[error("unsupported JPEG feature: {0}")]
    UnsupportedJpegFeature(String),

    #[error("image too small for metric: {0}")]
    TooSmall(String),
    #[error("perturbation has zero norm")]
    ZeroPerturbation,
    #[error("duplicate metric name: {0}")]
    DuplicateMetric(String),
    #[error("unknown metric: {0}")]
    UnknownMetric(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend failed (exit code {code:?}): {stderr}")]
    BackendFailed { code: Option<i32>, stderr: String },
    #[error("backend timed out after {0} s")]
    BackendTimeout(f64),
    #[error("backend protocol error: {0}")]
    BackendProtocol(String),

    #[error("mask shape mismatch: expected {expected:?}, got {actual:?}")]
    MaskShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid ellipse: {0}")]
    InvalidEllipse(String),

    #[error("scale contract violated: expected {expected:?}, got {actual:?}")]
    ScaleContractViolated {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("scale mismatch for {role} SR: expected {expected}, got {actual}")]
    ScaleMismatch {
        role: String,
        expected: u32,
        actual: u32,
    },

    #[error("epsilon {0} out of range (0, 0.25]")]
    EpsilonOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("config error: {0}")]
    Config(String),
}
