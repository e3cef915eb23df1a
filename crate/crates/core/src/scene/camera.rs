use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn normalize(a: Vec3) -> Vec3 {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Pinhole camera. In camera space it looks along `-z` with `+x` right and
/// `+y` up; `c2w` maps camera space to scene space.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub c2w: [[f64; 4]; 4],
    /// Horizontal field of view in radians.
    pub fov_x: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(c2w: [[f64; 4]; 4], fov_x: f64, width: u32, height: u32, near: f64, far: f64) -> Result<Self> {
        let cam = Self {
            c2w,
            fov_x,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fov_x > 0.0 && self.fov_x < std::f64::consts::PI) {
            return Err(Error::MalformedTransform(format!("field of view {} outside (0, pi)", self.fov_x)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::MalformedTransform("empty image plane".into()));
        }
        if !(self.near < self.far) {
            return Err(Error::InvalidBounds {
                near: self.near,
                far: self.far,
                samples: 0,
            });
        }
        let r = self.rotation();
        let det = dot3(r[0], cross(r[1], r[2]));
        if !det.is_finite() || det.abs() < 1e-8 {
            return Err(Error::MalformedTransform("rotation block is not invertible".into()));
        }
        // columns of the rotation block must be orthonormal
        let col = |j: usize| [r[0][j], r[1][j], r[2][j]];
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot3(col(a), col(b)) - want).abs() > 1e-4 {
                    return Err(Error::MalformedTransform("rotation block is not orthonormal".into()));
                }
            }
        }
        Ok(())
    }

    /// Camera whose `-z` axis points from `eye` at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: u32, height: u32, near: f64, far: f64) -> Result<Self> {
        let back = normalize(sub(eye, target));
        let right = normalize(cross(up, back));
        let true_up = cross(back, right);
        let c2w = [
            [right[0], true_up[0], back[0], eye[0]],
            [right[1], true_up[1], back[1], eye[1]],
            [right[2], true_up[2], back[2], eye[2]],
            [0.0, 0.0, 0.0, 1.0],
        ];
        Self::new(c2w, fov_x, width, height, near, far)
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let m = &self.c2w;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    pub fn position(&self) -> Vec3 {
        [self.c2w[0][3], self.c2w[1][3], self.c2w[2][3]]
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_x).tan()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        [
            self.origin[0] + t * self.dir[0],
            self.origin[1] + t * self.dir[1],
            self.origin[2] + t * self.dir[2],
        ]
    }
}

/// Ray through the center of pixel `(u, v)` in scene space.
pub fn generate_ray(camera: &Camera, u: u32, v: u32) -> Result<Ray> {
    if u >= camera.width || v >= camera.height {
        return Err(Error::PixelOutOfBounds {
            u,
            v,
            width: camera.width,
            height: camera.height,
        });
    }
    let f = camera.focal();
    let local = [
        (u as f64 + 0.5 - 0.5 * camera.width as f64) / f,
        -(v as f64 + 0.5 - 0.5 * camera.height as f64) / f,
        -1.0,
    ];
    let r = camera.rotation();
    let world = [dot3(r[0], local), dot3(r[1], local), dot3(r[2], local)];
    Ok(Ray {
        origin: camera.position(),
        dir: normalize(world),
    })
}

/// Affine map from scene space into the unit-cube query domain:
/// `p_unit = p * scale + offset`. Distances scale by `scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneTransform {
    pub scale: f64,
    pub offset: Vec3,
}

impl Default for SceneTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SceneTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: [0.0; 3],
        }
    }

    /// Maps the centered cube `[-half_extent, half_extent]^3` onto `[0, 1]^3`.
    pub fn centered(half_extent: f64) -> Self {
        Self {
            scale: 0.5 / half_extent,
            offset: [0.5; 3],
        }
    }

    pub fn point(&self, p: Vec3) -> Vec3 {
        [
            p[0] * self.scale + self.offset[0],
            p[1] * self.scale + self.offset[1],
            p[2] * self.scale + self.offset[2],
        ]
    }

    pub fn ray(&self, ray: &Ray) -> Ray {
        Ray {
            origin: self.point(ray.origin),
            dir: ray.dir,
        }
    }

    pub fn distance(&self, d: f64) -> f64 {
        d * self.scale
    }
}
