use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidConfig(String),

    #[error("level {level} out of range 1..={levels}")]
    InvalidLevel { level: usize, levels: usize },

    #[error("point {0:?} lies outside the unit domain")]
    OutOfDomain(Vec<f64>),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(&'static str),

    #[error("direction is not unit length (norm {0})")]
    NonUnitDirection(f64),

    #[error("backward pass called without a matching forward cache")]
    MissingCache,

    #[error("samples are not ordered front to back at index {0}")]
    UnorderedSamples(usize),

    #[error("negative or zero sample interval at index {0}")]
    NegativeInterval(usize),

    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: u64, total: u64 },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: u64, loss: f64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),

    #[error("incompatible config: field {field} is {found}, expected {expected}")]
    IncompatibleConfig {
        field: &'static str,
        found: String,
        expected: String,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed transform: {0}")]
    MalformedTransform(String),

    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),

    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: u32,
        v: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid sampling bounds: near {near}, far {far}, samples {samples}")]
    InvalidBounds { near: f64, far: f64, samples: usize },

    #[error("image too small for SSIM: {width}x{height}")]
    ImageTooSmall { width: usize, height: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
