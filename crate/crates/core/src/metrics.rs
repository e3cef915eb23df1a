//! Image-quality metrics, parameter reports and CSV number formatting.

use std::time::Duration;

use crate::encoding::ParameterCount;
use crate::error::{Error, Result};
use crate::raster::Raster;

fn check_shapes(a: &Raster, b: &Raster) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    check_shapes(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .flat_map(|(p, q)| (0..3).map(move |k| (p[k] as f64 - q[k] as f64).powi(2)))
        .sum();
    Ok(sum / (3 * a.len()) as f64)
}

/// `10 log10(peak^2 / mse)`; `f64::INFINITY` when the images are identical.
pub fn psnr(a: &Raster, b: &Raster, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn grayscale(img: &Raster) -> Vec<f64> {
    img.data
        .iter()
        .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
        .collect()
}

/// Mean structural similarity over every fully contained 11x11 Gaussian
/// window (sigma 1.5) of the channel-mean grayscale images.
pub fn ssim(a: &Raster, b: &Raster, peak: f64) -> Result<f64> {
    check_shapes(a, b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let g = gaussian_window();
    let (x, y) = (grayscale(a), grayscale(b));
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for oy in 0..oh {
        for ox in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for j in 0..SSIM_WINDOW {
                for i in 0..SSIM_WINDOW {
                    let k = g[i] * g[j];
                    let idx = (oy + j) * w + ox + i;
                    let (p, q) = (x[idx], y[idx]);
                    mx += k * p;
                    my += k * q;
                    sxx += k * p * p;
                    syy += k * q * q;
                    sxy += k * p * q;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (ow * oh) as f64)
}

/// Quality and size summary of one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub mse: f64,
    pub ssim: Option<f64>,
    pub parameters: ParameterCount,
    pub phases: Vec<(String, Duration)>,
}

impl MetricReport {
    pub fn compare(rendered: &Raster, target: &Raster, parameters: ParameterCount) -> Result<Self> {
        let mse = mse(rendered, target)?;
        let ssim = match ssim(rendered, target, 1.0) {
            Ok(v) => Some(v),
            Err(Error::ImageTooSmall { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            psnr: psnr_from_mse(mse, 1.0),
            mse,
            ssim,
            parameters,
            phases: Vec::new(),
        })
    }
}

/// Formats a float with at most 9 significant digits; non-finite values
/// become `inf`, `-inf` or `nan`.
pub fn format_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let a = Raster::filled(12, 12, [0.3, 0.6, 0.9]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_offset_is_20_db() {
        let a = Raster::filled(4, 4, [0.5; 3]);
        let b = Raster::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn inverted_constant_lowers_ssim() {
        let a = Raster::filled(16, 16, [0.2; 3]);
        let b = Raster::filled(16, 16, [0.8; 3]);
        let s = ssim(&a, &b, 1.0).unwrap();
        assert!(s < 1.0 && s > 0.0, "{s}");
    }

    #[test]
    fn small_and_mismatched_inputs() {
        let a = Raster::new(10, 20);
        assert!(matches!(ssim(&a, &a, 1.0), Err(Error::ImageTooSmall { .. })));
        assert!(matches!(mse(&a, &Raster::new(20, 10)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(f64::INFINITY), "inf");
        assert_eq!(format_sig9(0.1), "0.1");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789012.0), "123456789000");
        assert_eq!(format_sig9(2.0), "2");
    }
}
