//! Minimal RGB float image with PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![color; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        self.data[y * self.width + x] = rgb;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Loads a PNG, compositing any alpha channel over `background`.
    pub fn load_png(path: &Path, background: [f32; 3]) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = image::open(path)?.into_rgba32f();
        let (w, h) = img.dimensions();
        let data = img
            .pixels()
            .map(|p| composite_over(p.0, background))
            .collect();
        Ok(Self {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    /// Writes an 8-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 3);
        for px in &self.data {
            for &c in px {
                buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        image::save_buffer(path, &buf, self.width as u32, self.height as u32, image::ColorType::Rgb8)?;
        Ok(())
    }

    /// Writes an 8-bit RGBA PNG with the given per-pixel alpha.
    pub fn save_png_rgba(&self, alpha: &[f32], path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 4);
        for (px, &a) in self.data.iter().zip(alpha) {
            for &c in px {
                buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            buf.push((a.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        image::save_buffer(path, &buf, self.width as u32, self.height as u32, image::ColorType::Rgba8)?;
        Ok(())
    }

    /// Box-filter downsampling by an integer factor.
    pub fn downsample(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        let (w, h) = (self.width / factor, self.height / factor);
        let mut out = Self::new(w, h);
        let norm = 1.0 / (factor * factor) as f32;
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0f32; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let p = self.get(x * factor + dx, y * factor + dy);
                        for k in 0..3 {
                            acc[k] += p[k];
                        }
                    }
                }
                out.set(x, y, acc.map(|v| v * norm));
            }
        }
        out
    }
}

/// `rgb · a + background · (1 - a)`
#[inline]
pub fn composite_over(rgba: [f32; 4], background: [f32; 3]) -> [f32; 3] {
    let a = rgba[3];
    [
        rgba[0] * a + background[0] * (1.0 - a),
        rgba[1] * a + background[1] * (1.0 - a),
        rgba[2] * a + background[2] * (1.0 - a),
    ]
}
