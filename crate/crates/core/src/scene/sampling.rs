//! Stratified sampling along rays clipped to the unit cube.

use rand::Rng;

use super::camera::{Ray, Vec3};
use crate::error::{Error, Result};

/// Samples along one ray, front to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub positions: Vec<Vec3>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Entry and exit parameters of `ray` through `[0, 1]^3`, if it hits.
pub fn intersect_unit_cube(ray: &Ray) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        let (o, d) = (ray.origin[a], ray.dir[a]);
        if d == 0.0 {
            if !(0.0..=1.0).contains(&o) {
                return None;
            }
            continue;
        }
        let (mut lo, mut hi) = ((0.0 - o) / d, (1.0 - o) / d);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    (t0 < t1).then_some((t0, t1))
}

/// Splits `[near, far] ∩ cube` into `n` equal bins and places one sample in
/// each: uniformly at random when `jitter` is given, at the bin midpoint
/// otherwise. `δ_i = t_{i+1} - t_i`, and the last `δ` is the bin width. Rays
/// that miss the cube yield no samples.
pub fn sample_ray<G: Rng>(ray: &Ray, near: f64, far: f64, n: usize, jitter: Option<&mut G>) -> Result<RaySamples> {
    match jitter {
        Some(rng) => {
            let offsets: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            sample_ray_with_offsets(ray, near, far, &offsets)
        }
        None => sample_ray_with_offsets(ray, near, far, &vec![0.5; n]),
    }
}

/// Like [`sample_ray`] with the position of sample `i` inside its bin given
/// by `offsets[i]` in `[0, 1)`.
pub fn sample_ray_with_offsets(ray: &Ray, near: f64, far: f64, offsets: &[f64]) -> Result<RaySamples> {
    let n = offsets.len();
    if !(near < far) || n == 0 {
        return Err(Error::InvalidBounds { near, far, samples: n });
    }
    let Some((enter, exit)) = intersect_unit_cube(ray) else {
        return Ok(RaySamples::default());
    };
    let (lo, hi) = (near.max(enter), far.min(exit));
    if !(lo < hi) {
        return Ok(RaySamples::default());
    }
    let bin = (hi - lo) / n as f64;
    let t: Vec<f64> = offsets
        .iter()
        .enumerate()
        .map(|(i, &u)| lo + (i as f64 + u) * bin)
        .collect();
    let mut delta: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    delta.push(bin);
    let positions = t
        .iter()
        .map(|&ti| ray.at(ti).map(|c| c.clamp(0.0, 1.0)))
        .collect();
    Ok(RaySamples { t, delta, positions })
}
