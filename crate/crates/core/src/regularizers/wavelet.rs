//! Separable orthonormal 3D Haar transform and coefficient shrinkage.
//!
//! Coefficients use the Mallat layout: after `L` levels the coarsest
//! approximation band occupies the low corner `[0, n/2^L)` on every axis and
//! each level's detail bands surround it. Extents that are not multiples of
//! `2^L` are first extended by half-sample symmetric reflection
//! (`x[n + k] = x[n - 1 - k]`); the inverse crops the extension away again.

use std::f64::consts::FRAC_1_SQRT_2;

use ndarray::{s, Array3, ArrayViewMut1, Axis, Zip};

use crate::error::{Error, Result};
use crate::volume::AngioVolume;
use crate::DEFAULT_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Zero coefficients with magnitude below the threshold.
    #[default]
    Hard,
    /// Additionally shrink the survivors toward zero by the threshold.
    Soft,
}

impl ThresholdMode {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdMode::Hard => "hard",
            ThresholdMode::Soft => "soft",
        }
    }
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Ok(Self::Hard),
            "soft" => Ok(Self::Soft),
            other => Err(Error::InvalidParameter(format!(
                "unknown threshold mode {other:?} (expected hard or soft)"
            ))),
        }
    }
}

/// Haar coefficients of a (possibly padded) volume.
#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    /// Extents of the volume before padding.
    pub shape: [usize; 3],
    pub levels: usize,
    pub data: Array3<f64>,
}

impl HaarCoefficients {
    /// Extents of the coarsest approximation band.
    pub fn approx_shape(&self) -> [usize; 3] {
        let (a, b, c) = self.data.dim();
        let f = 1usize << self.levels;
        [a / f, b / f, c / f]
    }

    fn is_approx(&self, idx: (usize, usize, usize)) -> bool {
        let [a, b, c] = self.approx_shape();
        idx.0 < a && idx.1 < b && idx.2 < c
    }

    /// Iterator over the detail coefficients (everything but the coarsest
    /// approximation band).
    pub fn details(&self) -> impl Iterator<Item = f64> + '_ {
        self.data
            .indexed_iter()
            .filter(|(idx, _)| !self.is_approx(*idx))
            .map(|(_, v)| *v)
    }
}

fn padded_extent(n: usize, levels: usize) -> Result<usize> {
    let block = 1usize
        .checked_shl(levels as u32)
        .filter(|b| *b > 0 && levels < usize::BITS as usize)
        .ok_or_else(|| Error::InvalidParameter(format!("{levels} decomposition levels")))?;
    let padded = n.div_ceil(block) * block;
    if padded - n > n {
        return Err(Error::InvalidParameter(format!(
            "{levels} Haar levels need extent >= {} along an axis of length {n}",
            block.div_ceil(2)
        )));
    }
    Ok(padded)
}

/// Largest number of levels the extents allow.
pub fn max_levels(shape: [usize; 3]) -> usize {
    let mut l = 0;
    while l < 30 && shape.iter().all(|&n| padded_extent(n, l + 1).is_ok()) {
        l += 1;
    }
    l
}

fn reflect(i: usize, n: usize) -> usize {
    if i < n {
        i
    } else {
        2 * n - 1 - i
    }
}

fn haar_forward_lane(mut lane: ArrayViewMut1<'_, f64>, scratch: &mut Vec<f64>) {
    let n = lane.len();
    let half = n / 2;
    scratch.clear();
    scratch.extend(lane.iter().copied());
    for k in 0..half {
        let (a, b) = (scratch[2 * k], scratch[2 * k + 1]);
        lane[k] = (a + b) * FRAC_1_SQRT_2;
        lane[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn haar_inverse_lane(mut lane: ArrayViewMut1<'_, f64>, scratch: &mut Vec<f64>) {
    let n = lane.len();
    let half = n / 2;
    scratch.clear();
    scratch.extend(lane.iter().copied());
    for k in 0..half {
        let (a, d) = (scratch[k], scratch[half + k]);
        lane[2 * k] = (a + d) * FRAC_1_SQRT_2;
        lane[2 * k + 1] = (a - d) * FRAC_1_SQRT_2;
    }
}

fn transform_block(data: &mut Array3<f64>, ext: [usize; 3], inverse: bool) {
    let mut block = data.slice_mut(s![..ext[0], ..ext[1], ..ext[2]]);
    let axes: [usize; 3] = if inverse { [2, 1, 0] } else { [0, 1, 2] };
    for axis in axes {
        Zip::from(block.lanes_mut(Axis(axis))).par_for_each(|lane| {
            let mut scratch = Vec::with_capacity(lane.len());
            if inverse {
                haar_inverse_lane(lane, &mut scratch);
            } else {
                haar_forward_lane(lane, &mut scratch);
            }
        });
    }
}

/// Multi-level orthonormal 3D Haar analysis.
pub fn haar_dwt_3d(x: &AngioVolume, levels: usize) -> Result<HaarCoefficients> {
    haar_forward(x.data(), levels)
}

pub(crate) fn haar_forward(x: &Array3<f64>, levels: usize) -> Result<HaarCoefficients> {
    if levels == 0 {
        return Err(Error::InvalidParameter("Haar levels must be >= 1".into()));
    }
    let (n0, n1, n2) = x.dim();
    let padded = [
        padded_extent(n0, levels)?,
        padded_extent(n1, levels)?,
        padded_extent(n2, levels)?,
    ];
    let mut data = Array3::from_shape_fn((padded[0], padded[1], padded[2]), |(i, j, k)| {
        x[[reflect(i, n0), reflect(j, n1), reflect(k, n2)]]
    });
    let mut ext = padded;
    for _ in 0..levels {
        transform_block(&mut data, ext, false);
        ext = [ext[0] / 2, ext[1] / 2, ext[2] / 2];
    }
    Ok(HaarCoefficients {
        shape: [n0, n1, n2],
        levels,
        data,
    })
}

/// Inverse of [`haar_dwt_3d`], cropped back to the original extents.
pub fn haar_idwt_3d(coeffs: &HaarCoefficients) -> Array3<f64> {
    let mut data = coeffs.data.clone();
    let (p0, p1, p2) = data.dim();
    for level in (0..coeffs.levels).rev() {
        let f = 1usize << level;
        transform_block(&mut data, [p0 / f, p1 / f, p2 / f], true);
    }
    let [n0, n1, n2] = coeffs.shape;
    data.slice(s![..n0, ..n1, ..n2]).to_owned()
}

/// Applies the threshold rule to every detail coefficient in place; the
/// coarsest approximation band is left untouched.
pub fn shrink_details(coeffs: &mut HaarCoefficients, threshold: f64, mode: ThresholdMode) {
    let [a0, a1, a2] = coeffs.approx_shape();
    Zip::indexed(&mut coeffs.data).par_for_each(|(i, j, k), c| {
        if i < a0 && j < a1 && k < a2 {
            return;
        }
        if c.abs() < threshold {
            *c = 0.0;
        } else if mode == ThresholdMode::Soft {
            *c -= threshold * c.signum();
        }
    });
}

/// Shrinkage without the final positivity clamp.
pub(crate) fn shrink_raw(
    x: &Array3<f64>,
    threshold: f64,
    levels: usize,
    mode: ThresholdMode,
) -> Result<Array3<f64>> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "wavelet threshold must be finite and >= 0, got {threshold}"
        )));
    }
    let mut coeffs = haar_forward(x, levels)?;
    shrink_details(&mut coeffs, threshold, mode);
    Ok(haar_idwt_3d(&coeffs))
}

/// Hard-threshold wavelet shrinkage, clamped to the default floor.
pub fn wavelet_shrinkage(x: &AngioVolume, threshold: f64, levels: usize) -> Result<AngioVolume> {
    wavelet_shrinkage_with(x, threshold, levels, ThresholdMode::Hard, DEFAULT_FLOOR)
}

pub fn wavelet_shrinkage_with(
    x: &AngioVolume,
    threshold: f64,
    levels: usize,
    mode: ThresholdMode,
    floor: f64,
) -> Result<AngioVolume> {
    let out = shrink_raw(x.data(), threshold, levels, mode)?;
    Ok(AngioVolume::from_trusted(out.mapv(|v| v.max(floor))))
}
