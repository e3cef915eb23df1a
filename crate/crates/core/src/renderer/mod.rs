//! Direction encoding, the density/color network and volume compositing.

pub mod composite;
pub mod mlp;
pub mod sh;

pub use composite::{composite, composite_backward, Composite, SampleSpan};
pub use mlp::{MlpCache, MlpConfig, MlpParameters, PointRadiance};
pub use sh::{encode_direction, SH_COEFFS};
