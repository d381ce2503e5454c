//! PSNR and SSIM.

use std::fmt;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{AngioVolume, EnFaceImage};

/// Anything with a shape and a flat pixel buffer.
pub trait Pixels {
    fn shape_vec(&self) -> Vec<usize>;
    fn pixels(&self) -> &[f64];
}

impl Pixels for AngioVolume {
    fn shape_vec(&self) -> Vec<usize> {
        self.shape().to_vec()
    }

    fn pixels(&self) -> &[f64] {
        self.data().as_slice().expect("standard layout")
    }
}

impl Pixels for EnFaceImage {
    fn shape_vec(&self) -> Vec<usize> {
        vec![self.width(), self.height()]
    }

    fn pixels(&self) -> &[f64] {
        self.data().as_slice().expect("standard layout")
    }
}

fn check_same_shape<T: Pixels>(a: &T, b: &T) -> Result<()> {
    if a.shape_vec() != b.shape_vec() {
        return Err(Error::ShapeMismatch {
            left: format!("{:?}", a.shape_vec()),
            right: format!("{:?}", b.shape_vec()),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in decibels; identical inputs have no finite
/// value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Psnr::Finite(_))
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse<T: Pixels>(a: &T, b: &T) -> Result<f64> {
    check_same_shape(a, b)?;
    Ok(stats::mean(
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(x, y)| (x - y) * (x - y)),
    ))
}

/// `10·log10(range²/MSE)`, evaluated as `20·log10(range) - 10·log10(MSE)`.
pub fn psnr<T: Pixels>(a: &T, b: &T, data_range: f64) -> Result<Psnr> {
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "PSNR data range must be positive, got {data_range}"
        )));
    }
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(20.0 * data_range.log10() - 10.0 * mse.log10()))
}

/// Data range convention for comparisons against a reference: its
/// 99.9th-percentile value (falling back to 1 for an all-zero reference).
pub fn reference_range<T: Pixels>(reference: &T) -> f64 {
    let r = stats::percentile(reference.pixels(), 99.9);
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> Array1<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let w = Array1::from_shape_fn(SSIM_WINDOW, |i| {
        let d = i as f64 - c;
        (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s = w.sum();
    w / s
}

/// Separable 'valid' filtering with a symmetric 1D kernel along both axes.
fn filter_valid(img: &Array2<f64>, k: &Array1<f64>) -> Array2<f64> {
    let n = k.len();
    let (w, h) = img.dim();
    let rows: Array2<f64> = Array2::from_shape_fn((w - n + 1, h), |(i, j)| {
        (0..n).map(|t| k[t] * img[[i + t, j]]).sum::<f64>()
    });
    Array2::from_shape_fn((w - n + 1, h - n + 1), |(i, j)| {
        (0..n).map(|t| k[t] * rows[[i, j + t]]).sum()
    })
}

/// Mean structural similarity over all fully contained 11×11 Gaussian
/// windows (σ = 1.5, K₁ = 0.01, K₂ = 0.03).
pub fn ssim(a: &EnFaceImage, b: &EnFaceImage, data_range: f64) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::InvalidDims(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "SSIM data range must be positive, got {data_range}"
        )));
    }
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let k = gaussian_window();
    let (x, y) = (a.data(), b.data());
    let mu_x = filter_valid(x, &k);
    let mu_y = filter_valid(y, &k);
    let xx = filter_valid(&(x * x), &k);
    let yy = filter_valid(&(y * y), &k);
    let xy = filter_valid(&(x * y), &k);
    let mut total = 0.0;
    for ((((mx, my), sxx), syy), sxy) in mu_x
        .iter()
        .zip(mu_y.iter())
        .zip(xx.iter())
        .zip(yy.iter())
        .zip(xy.iter())
    {
        let var_x = sxx - mx * mx;
        let var_y = syy - my * my;
        let cov = sxy - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    Ok(total / mu_x.len_of(Axis(0)) as f64 / mu_x.len_of(Axis(1)) as f64)
}
