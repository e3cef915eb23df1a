//! Real spherical harmonics up to degree 3 (16 coefficients) for view
//! directions.
//!
//! Basis order within degree `l` is `m = -l..=l`, with the Condon-Shortley
//! phase folded into the constants below.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const SH_COEFFS: usize = 16;

const UNIT_TOLERANCE: f64 = 1e-6;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Evaluates the 16 basis functions at the unit direction `d`.
pub fn encode_direction<R: Real>(d: [R; 3]) -> Result<[R; SH_COEFFS]> {
    let norm = d.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::NonUnitDirection(norm));
    }
    Ok(eval_unchecked(d))
}

/// Same as [`encode_direction`] without the unit-norm check.
pub fn eval_unchecked<R: Real>(d: [R; 3]) -> [R; SH_COEFFS] {
    let [x, y, z] = d;
    let c = R::lit;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        c(C0),
        c(-C1) * y,
        c(C1) * z,
        c(-C1) * x,
        c(C2[0]) * x * y,
        c(C2[1]) * y * z,
        c(C2[2]) * (c(2.0) * zz - xx - yy),
        c(C2[3]) * x * z,
        c(C2[4]) * (xx - yy),
        c(C3[0]) * y * (c(3.0) * xx - yy),
        c(C3[1]) * x * y * z,
        c(C3[2]) * y * (c(4.0) * zz - xx - yy),
        c(C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy),
        c(C3[4]) * x * (c(4.0) * zz - xx - yy),
        c(C3[5]) * z * (xx - yy),
        c(C3[6]) * x * (xx - c(3.0) * yy),
    ]
}

/// Degree of coefficient `i`.
pub fn degree_of(i: usize) -> usize {
    match i {
        0 => 0,
        1..=3 => 1,
        4..=8 => 2,
        _ => 3,
    }
}
