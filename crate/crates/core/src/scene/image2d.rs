//! Fitting a single image as a 2D field: each pixel is one training example.

use crate::raster::Raster;

/// Pixel-center coordinates in `[0, 1]^2` paired with RGB targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFitTask {
    pub target: Raster,
}

pub fn make_image2d_dataset(image: Raster) -> ImageFitTask {
    ImageFitTask { target: image }
}

impl ImageFitTask {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Coordinate of flat pixel `index`: `((u + 0.5) / w, (v + 0.5) / h)`.
    pub fn coord(&self, index: usize) -> [f64; 2] {
        let (w, h) = (self.target.width, self.target.height);
        let (u, v) = (index % w, index / w);
        [(u as f64 + 0.5) / w as f64, (v as f64 + 0.5) / h as f64]
    }

    pub fn color(&self, index: usize) -> [f32; 3] {
        self.target.data[index]
    }
}
