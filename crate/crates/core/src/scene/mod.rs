//! Cameras, ray sampling, dataset ingestion and the procedural oracle scene.

pub mod camera;
pub mod dataset;
pub mod image2d;
pub mod oracle;
pub mod sampling;

pub use camera::{generate_ray, Camera, Ray, SceneTransform};
pub use dataset::{load_nerf_synthetic, Background, RayDataset};
pub use image2d::{make_image2d_dataset, ImageFitTask};
pub use oracle::{oracle_rig, render_oracle, OracleScene};
pub use sampling::{intersect_unit_cube, sample_ray, sample_ray_with_offsets, RaySamples};
