//! Posed image collections and the transforms-file loader.

use std::path::{Path, PathBuf};

use serde_json::Value;

use super::camera::{generate_ray, Camera, Ray, SceneTransform};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Background {
    White,
    Black,
}

impl Background {
    pub fn rgb(self) -> [f32; 3] {
        match self {
            Background::White => [1.0; 3],
            Background::Black => [0.0; 3],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Background::White),
            "black" => Ok(Background::Black),
            other => Err(Error::Parse(format!("unknown background {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Background::White => "white",
            Background::Black => "black",
        }
    }
}

/// Cameras with their ground-truth images, plus the map into the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct RayDataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<Raster>,
    pub background: Background,
    pub transform: SceneTransform,
}

impl RayDataset {
    pub fn new(cameras: Vec<Camera>, images: Vec<Raster>, background: Background, transform: SceneTransform) -> Result<Self> {
        if cameras.len() != images.len() {
            return Err(Error::ShapeMismatch {
                expected: cameras.len(),
                got: images.len(),
            });
        }
        if let Some(first) = images.first() {
            for (i, (img, cam)) in images.iter().zip(&cameras).enumerate() {
                if img.width != first.width || img.height != first.height {
                    return Err(Error::ResolutionMismatch(format!(
                        "image {i} is {}x{}, expected {}x{}",
                        img.width, img.height, first.width, first.height
                    )));
                }
                if cam.width as usize != img.width || cam.height as usize != img.height {
                    return Err(Error::ResolutionMismatch(format!("camera {i} does not match its image")));
                }
            }
        }
        Ok(Self {
            cameras,
            images,
            background,
            transform,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.images.first().map(Raster::len).unwrap_or(0)
    }

    pub fn total_pixels(&self) -> usize {
        self.len() * self.pixels_per_image()
    }

    /// Ray of flat pixel index `index` (image-major), mapped into the unit
    /// cube, with near/far in unit-cube distances and the target color.
    pub fn unit_ray(&self, index: usize) -> Result<(Ray, f64, f64, [f32; 3])> {
        let per = self.pixels_per_image();
        let (img, px) = (index / per, index % per);
        let cam = &self.cameras[img];
        let raster = &self.images[img];
        let (u, v) = (px % raster.width, px / raster.width);
        let ray = self.transform.ray(&generate_ray(cam, u as u32, v as u32)?);
        Ok((
            ray,
            self.transform.distance(cam.near),
            self.transform.distance(cam.far),
            raster.data[px],
        ))
    }
}

/// Default near/far planes of the synthetic benchmark scenes, in scene units.
pub const SYNTHETIC_NEAR: f64 = 2.0;
pub const SYNTHETIC_FAR: f64 = 6.0;

/// Loads `transforms_<split>.json` and its images from `dir`.
///
/// Optional top-level `near` and `far` keys override the synthetic defaults.
/// Frames reference images by `file_path` relative to `dir`; a missing
/// extension defaults to `.png`. RGBA images are composited over
/// `background`.
pub fn load_nerf_synthetic(dir: &Path, split: &str, background: Background, transform: SceneTransform) -> Result<RayDataset> {
    let path = dir.join(format!("transforms_{split}.json"));
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let fov_x = meta["camera_angle_x"]
        .as_f64()
        .ok_or_else(|| Error::Parse(format!("{}: missing camera_angle_x", path.display())))?;
    let frames = meta["frames"]
        .as_array()
        .ok_or_else(|| Error::Parse(format!("{}: missing frames", path.display())))?;
    let near = meta["near"].as_f64().unwrap_or(SYNTHETIC_NEAR);
    let far = meta["far"].as_f64().unwrap_or(SYNTHETIC_FAR);
    let bg = background.rgb();
    let mut cameras = Vec::with_capacity(frames.len());
    let mut images = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let file = frame["file_path"]
            .as_str()
            .ok_or_else(|| Error::Parse(format!("frame {i}: missing file_path")))?;
        let c2w = parse_matrix(&frame["transform_matrix"]).map_err(|e| match e {
            Error::MalformedTransform(m) => Error::MalformedTransform(format!("frame {i}: {m}")),
            other => other,
        })?;
        let image_path = resolve_image(dir, file);
        let img = Raster::load_png(&image_path, bg)?;
        if let Some(first) = images.first() {
            let first: &Raster = first;
            if (first.width, first.height) != (img.width, img.height) {
                return Err(Error::ResolutionMismatch(format!(
                    "{} is {}x{}, expected {}x{}",
                    image_path.display(),
                    img.width,
                    img.height,
                    first.width,
                    first.height
                )));
            }
        }
        let cam = Camera::new(c2w, fov_x, img.width as u32, img.height as u32, near, far)
            .map_err(|e| match e {
                Error::MalformedTransform(m) => Error::MalformedTransform(format!("frame {i}: {m}")),
                other => other,
            })?;
        cameras.push(cam);
        images.push(img);
    }
    RayDataset::new(cameras, images, background, transform)
}

fn resolve_image(dir: &Path, file: &str) -> PathBuf {
    let rel = file.trim_start_matches("./");
    let p = dir.join(rel);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

fn parse_matrix(v: &Value) -> Result<[[f64; 4]; 4]> {
    let rows = v
        .as_array()
        .filter(|r| r.len() == 4)
        .ok_or_else(|| Error::MalformedTransform("transform_matrix must be 4x4".into()))?;
    let mut m = [[0.0; 4]; 4];
    for (i, row) in rows.iter().enumerate() {
        let cols = row
            .as_array()
            .filter(|c| c.len() == 4)
            .ok_or_else(|| Error::MalformedTransform("transform_matrix must be 4x4".into()))?;
        for (j, c) in cols.iter().enumerate() {
            m[i][j] = c
                .as_f64()
                .ok_or_else(|| Error::MalformedTransform("non-numeric matrix entry".into()))?;
        }
    }
    Ok(m)
}

/// Writes a dataset in the transforms-file layout: `transforms_<split>.json`
/// plus `<split>/r_<i>.png`.
pub fn write_nerf_synthetic(dir: &Path, split: &str, cameras: &[Camera], images: &[Raster], alpha: Option<&[Vec<f32>]>) -> Result<()> {
    std::fs::create_dir_all(dir.join(split))?;
    let first = cameras.first();
    let fov = first.map(|c| c.fov_x).unwrap_or(0.0);
    let near = first.map(|c| c.near).unwrap_or(SYNTHETIC_NEAR);
    let far = first.map(|c| c.far).unwrap_or(SYNTHETIC_FAR);
    let mut frames = Vec::new();
    for (i, (cam, img)) in cameras.iter().zip(images).enumerate() {
        let rel = format!("./{split}/r_{i}");
        let png = dir.join(split).join(format!("r_{i}.png"));
        match alpha {
            Some(a) => img.save_png_rgba(&a[i], &png)?,
            None => img.save_png(&png)?,
        }
        frames.push(serde_json::json!({
            "file_path": rel,
            "transform_matrix": cam.c2w,
        }));
    }
    let meta = serde_json::json!({ "camera_angle_x": fov, "near": near, "far": far, "frames": frames });
    std::fs::write(
        dir.join(format!("transforms_{split}.json")),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}
