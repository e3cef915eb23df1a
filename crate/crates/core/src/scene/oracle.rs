//! Procedural scene with closed-form density and color, and a reference
//! renderer for it.
//!
//! The renderer composites in `f64` with its own loop so it stays independent
//! of [`crate::renderer::composite`].

use std::fmt::Write as _;

use super::camera::{generate_ray, Camera, SceneTransform, Vec3};
use super::dataset::Background;
use super::sampling::intersect_unit_cube;
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq)]
pub struct SoftSphere {
    pub center: Vec3,
    pub radius: f64,
    pub color: [f64; 3],
    pub density: f64,
    /// Half-width of the smooth density falloff around the surface.
    pub softness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SoftBox {
    pub min: Vec3,
    pub max: Vec3,
    pub color: [f64; 3],
    pub density: f64,
    pub softness: f64,
}

/// Soft-edged spheres and boxes inside the unit cube.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleScene {
    pub spheres: Vec<SoftSphere>,
    pub boxes: Vec<SoftBox>,
    pub background: Background,
}

/// `1` for `sd <= -s`, `0` for `sd >= s`, cubic smoothstep in between.
fn falloff(sd: f64, s: f64) -> f64 {
    let t = ((s - sd) / (2.0 * s)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl SoftSphere {
    fn signed_distance(&self, p: Vec3) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() - self.radius
    }
}

impl SoftBox {
    fn signed_distance(&self, p: Vec3) -> f64 {
        let mut outside = 0.0;
        let mut inside = f64::NEG_INFINITY;
        for a in 0..3 {
            let c = 0.5 * (self.min[a] + self.max[a]);
            let h = 0.5 * (self.max[a] - self.min[a]);
            let q = (p[a] - c).abs() - h;
            outside += q.max(0.0).powi(2);
            inside = inside.max(q);
        }
        outside.sqrt() + inside.min(0.0)
    }
}

impl OracleScene {
    /// A red sphere resting above a flat blue box, on white.
    pub fn standard() -> Self {
        Self {
            spheres: vec![SoftSphere {
                center: [0.5, 0.5, 0.56],
                radius: 0.2,
                color: [0.9, 0.25, 0.2],
                density: 60.0,
                softness: 0.02,
            }],
            boxes: vec![SoftBox {
                min: [0.25, 0.25, 0.22],
                max: [0.75, 0.75, 0.34],
                color: [0.15, 0.45, 0.85],
                density: 60.0,
                softness: 0.02,
            }],
            background: Background::White,
        }
    }

    /// Density and density-weighted color at `p` (unit-cube coordinates).
    pub fn radiance(&self, p: Vec3) -> (f64, [f64; 3]) {
        let mut sigma = 0.0;
        let mut weighted = [0.0; 3];
        let parts = self
            .spheres
            .iter()
            .map(|s| (s.density * falloff(s.signed_distance(p), s.softness), s.color))
            .chain(
                self.boxes
                    .iter()
                    .map(|b| (b.density * falloff(b.signed_distance(p), b.softness), b.color)),
            );
        for (s, c) in parts {
            sigma += s;
            for k in 0..3 {
                weighted[k] += s * c[k];
            }
        }
        if sigma > 0.0 {
            (sigma, weighted.map(|w| w / sigma))
        } else {
            (0.0, [0.0; 3])
        }
    }

    pub fn density(&self, p: Vec3) -> f64 {
        self.radiance(p).0
    }

    pub fn to_text(&self) -> String {
        let v = |a: &[f64]| a.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        let mut out = String::from("# oracle scene: one shape per line, unit-cube coordinates\n");
        let _ = writeln!(out, "background {}", self.background.as_str());
        for s in &self.spheres {
            let _ = writeln!(
                out,
                "sphere center {} radius {} color {} density {} softness {}",
                v(&s.center),
                s.radius,
                v(&s.color),
                s.density,
                s.softness
            );
        }
        for b in &self.boxes {
            let _ = writeln!(
                out,
                "box min {} max {} color {} density {} softness {}",
                v(&b.min),
                v(&b.max),
                v(&b.color),
                b.density,
                b.softness
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut scene = OracleScene {
            spheres: Vec::new(),
            boxes: Vec::new(),
            background: Background::White,
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Parse(format!("scene line {}: {m}", lineno + 1));
            let mut tokens = line.split_whitespace();
            let kind = tokens.next().unwrap_or_default();
            let rest: Vec<&str> = tokens.collect();
            if kind == "background" {
                scene.background = Background::parse(rest.first().copied().unwrap_or(""))?;
                continue;
            }
            let fields = parse_fields(&rest).map_err(|m| err(&m))?;
            let get = |name: &str, n: usize| -> Result<Vec<f64>> {
                let vals = fields
                    .iter()
                    .find(|(k, _)| k == name)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| err(&format!("missing {name}")))?;
                if vals.len() != n {
                    return Err(err(&format!("{name} needs {n} values")));
                }
                Ok(vals)
            };
            let v3 = |name: &str| -> Result<Vec3> {
                let v = get(name, 3)?;
                Ok([v[0], v[1], v[2]])
            };
            let softness = get("softness", 1)?[0];
            let density = get("density", 1)?[0];
            if !(softness > 0.0) || !(density >= 0.0) {
                return Err(err("softness must be positive and density non-negative"));
            }
            match kind {
                "sphere" => scene.spheres.push(SoftSphere {
                    center: v3("center")?,
                    radius: get("radius", 1)?[0],
                    color: v3("color")?,
                    density,
                    softness,
                }),
                "box" => scene.boxes.push(SoftBox {
                    min: v3("min")?,
                    max: v3("max")?,
                    color: v3("color")?,
                    density,
                    softness,
                }),
                other => return Err(err(&format!("unknown shape {other:?}"))),
            }
        }
        Ok(scene)
    }
}

fn parse_fields(tokens: &[&str]) -> std::result::Result<Vec<(String, Vec<f64>)>, String> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for tok in tokens {
        match tok.parse::<f64>() {
            Ok(v) => match out.last_mut() {
                Some((_, vals)) => vals.push(v),
                None => return Err(format!("value {tok} before any key")),
            },
            Err(_) => out.push((tok.to_string(), Vec::new())),
        }
    }
    Ok(out)
}

/// Ground-truth image of `scene` seen by `camera`, midpoint-sampled with
/// `n_samples` steps across the ray's span inside the unit cube.
///
/// Returns the image and the per-pixel opacity `1 - T_final`.
pub fn render_oracle(scene: &OracleScene, camera: &Camera, transform: &SceneTransform, n_samples: usize) -> Result<(Raster, Vec<f32>)> {
    if n_samples == 0 {
        return Err(Error::InvalidBounds {
            near: camera.near,
            far: camera.far,
            samples: 0,
        });
    }
    let bg = scene.background.rgb().map(f64::from);
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut img = Raster::new(w, h);
    let mut alpha = vec![0.0f32; w * h];
    let near = transform.distance(camera.near);
    let far = transform.distance(camera.far);
    for v in 0..h {
        for u in 0..w {
            let ray = transform.ray(&generate_ray(camera, u as u32, v as u32)?);
            let mut color = [0.0f64; 3];
            let mut trans = 1.0f64;
            if let Some((enter, exit)) = intersect_unit_cube(&ray) {
                let (lo, hi) = (near.max(enter), far.min(exit));
                if lo < hi {
                    let step = (hi - lo) / n_samples as f64;
                    for i in 0..n_samples {
                        let p = ray.at(lo + (i as f64 + 0.5) * step);
                        let (sigma, c) = scene.radiance(p);
                        if sigma == 0.0 {
                            continue;
                        }
                        let survive = (-sigma * step).exp();
                        let wgt = trans * (1.0 - survive);
                        for k in 0..3 {
                            color[k] += wgt * c[k];
                        }
                        trans *= survive;
                    }
                }
            }
            let px: [f32; 3] = std::array::from_fn(|k| (color[k] + trans * bg[k]) as f32);
            img.set(u, v, px);
            alpha[v * w + u] = (1.0 - trans) as f32;
        }
    }
    Ok((img, alpha))
}

/// Camera on a sphere of radius `distance` around the cube center, `+z` up.
pub fn orbit_camera(azimuth: f64, elevation: f64, distance: f64, fov_x: f64, width: u32, height: u32) -> Result<Camera> {
    let c = [0.5, 0.5, 0.5];
    let eye = [
        c[0] + distance * elevation.cos() * azimuth.cos(),
        c[1] + distance * elevation.cos() * azimuth.sin(),
        c[2] + distance * elevation.sin(),
    ];
    Camera::look_at(eye, c, [0.0, 0.0, 1.0], fov_x, width, height, 0.05, 2.0 * distance + 2.0)
}

pub const RIG_DISTANCE: f64 = 1.6;
pub const RIG_FOV: f64 = 0.8;

/// `count` training views spread in azimuth with elevations cycling through
/// four bands; `held_out` extra views sit between them.
pub fn oracle_rig(count: usize, held_out: usize, width: u32, height: u32) -> Result<(Vec<Camera>, Vec<Camera>)> {
    let bands = [0.35, 0.8, 0.05, 1.1];
    let tau = std::f64::consts::TAU;
    let train = (0..count)
        .map(|i| {
            let az = tau * i as f64 / count as f64;
            orbit_camera(az, bands[i % bands.len()], RIG_DISTANCE, RIG_FOV, width, height)
        })
        .collect::<Result<Vec<_>>>()?;
    let test = (0..held_out)
        .map(|i| {
            let az = tau * (i as f64 + 0.37) / held_out.max(1) as f64 + 0.5 * tau / count.max(1) as f64;
            orbit_camera(az, 0.55, RIG_DISTANCE, RIG_FOV, width, height)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((train, test))
}
