//! Mixed-feature multiresolution hash encoding for neural radiance fields.
//!
//! A stack of `L` feature grids is folded into `N` shared hash tables. Every
//! group of `L / N` consecutive levels rescales its corner indices into the
//! index space of the group's finest level before hashing, so corners that sit
//! at the same spatial location read the same table entry. On top of the
//! encoding sit a small density/color network with hand-written backward
//! passes, a differentiable volume compositor, a sparse Adam trainer and the
//! scene plumbing needed to exercise all of it on a desktop CPU.
//!
//! The numerical core is generic over [`Real`] (`f32` and `f64`). Training and
//! checkpoints use `f32`; the `f64` instantiation exists for gradient checks
//! and reference computations. Concrete `f32` aliases are exported below.

pub mod config;
pub mod encoding;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod raster;
pub mod renderer;
pub mod scalar;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use grid::{CornerSet, EncodingConfig, GridIndex, GridLevelSet};
pub use scalar::Real;

/// Feature tables stored as 32-bit reals.
pub type FeatureBank = encoding::FeatureTableBank<f32>;
/// Density/color network parameters in 32-bit reals.
pub type Mlp = renderer::mlp::MlpParameters<f32>;
/// Complete optimizer state as written to checkpoints.
pub type TrainState = trainer::TrainState<f32>;
/// Per-point encoder output in 32-bit reals.
pub type EncodedFeature = encoding::EncodedFeature<f32>;
/// `f64` feature tables, used by reference and gradient-check code.
pub type FeatureBank64 = encoding::FeatureTableBank<f64>;
/// `f64` network parameters.
pub type Mlp64 = renderer::mlp::MlpParameters<f64>;
