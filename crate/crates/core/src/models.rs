//! Per-voxel OCTA likelihood models.
//!
//! Each model treats a statistic of consecutive repeats as zero-mean Gaussian
//! with variance `x`. All three share the same shape: with a per-voxel sum of
//! squares `S` over `m` terms, the log-likelihood is
//! `-(m/2)·ln(2πx) - S/(2x)`, its maximizer is `x* = S/m`, and its derivative
//! is `(S - m·x)/(2x²) = m·(x* - x)/(2x²)`.
//!
//! | model | terms                                   | m     |
//! |-------|-----------------------------------------|-------|
//! | AD    | (yᵢ - yᵢ₊₁)² / (yᵢ² + yᵢ₊₁²)            | N - 1 |
//! | IFV   | (yᵢ - yᵢ₊₁)²                            | N - 1 |
//! | SV    | (yᵢ - ȳ)²                               | N     |
//!
//! The derivative is evaluated in the `m·(x* - x)` form so that it is exactly
//! zero at the closed-form estimate.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, ArrayView1, Zip};

use crate::error::{Error, Result};
use crate::volume::{AngioVolume, RepeatScanVolume};
use crate::DEFAULT_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngioModel {
    /// Amplitude decorrelation.
    Ad,
    /// Interframe variance.
    Ifv,
    /// Speckle variance (sample variance of the repeats).
    Sv,
}

impl AngioModel {
    pub fn name(self) -> &'static str {
        match self {
            AngioModel::Ad => "ad",
            AngioModel::Ifv => "ifv",
            AngioModel::Sv => "sv",
        }
    }

    /// Number of Gaussian terms contributed by `n` repeats.
    pub fn dof(self, n: usize) -> usize {
        match self {
            AngioModel::Ad | AngioModel::Ifv => n - 1,
            AngioModel::Sv => n,
        }
    }

    /// Sum of the model's squared terms over a repeat series.
    pub fn sum_of_squares<I>(self, repeats: I) -> f64
    where
        I: IntoIterator<Item = f64>,
        I::IntoIter: Clone,
    {
        let it = repeats.into_iter();
        match self {
            AngioModel::Ad => it
                .clone()
                .zip(it.skip(1))
                .map(|(a, b)| ad_decorrelation_term(a, b))
                .sum(),
            AngioModel::Ifv => it
                .clone()
                .zip(it.skip(1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            AngioModel::Sv => {
                let (sum, n) = it.clone().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                let mean = sum / n as f64;
                it.map(|v| (v - mean) * (v - mean)).sum()
            }
        }
    }

    /// Closed-form maximum likelihood estimate for one voxel.
    pub fn closed_form(self, y: &VoxelRepeats) -> f64 {
        let m = self.dof(y.len()) as f64;
        self.sum_of_squares(y.values().iter().copied()) / m
    }

    /// Derivative of the log-likelihood with respect to `x`.
    pub fn loglik_grad(self, x: f64, y: &VoxelRepeats) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "variance must be positive and finite, got {x}"
            )));
        }
        let m = self.dof(y.len()) as f64;
        Ok(grad_from_mle(m, self.closed_form(y), x))
    }
}

impl fmt::Display for AngioModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AngioModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ad" => Ok(AngioModel::Ad),
            "ifv" => Ok(AngioModel::Ifv),
            "sv" => Ok(AngioModel::Sv),
            other => Err(Error::InvalidParameter(format!(
                "unknown model {other:?} (expected ad, ifv or sv)"
            ))),
        }
    }
}

#[inline]
fn grad_from_mle(m: f64, mle: f64, x: f64) -> f64 {
    m * (mle - x) / (2.0 * x * x)
}

/// A single voxel's repeat series, at least two finite non-negative amplitudes.
#[derive(Debug, Clone, Copy)]
pub struct VoxelRepeats<'a> {
    values: &'a [f64],
}

impl<'a> VoxelRepeats<'a> {
    pub fn new(values: &'a [f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 repeats, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidData(format!("repeat amplitude {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `(yᵢ - yⱼ)² / (yᵢ² + yⱼ²)`, or 0 when both amplitudes are zero.
pub fn ad_decorrelation_term(yi: f64, yj: f64) -> f64 {
    let den = yi * yi + yj * yj;
    if den > 0.0 {
        (yi - yj) * (yi - yj) / den
    } else {
        0.0
    }
}

pub fn ad_closed_form(y: &[f64]) -> Result<f64> {
    Ok(AngioModel::Ad.closed_form(&VoxelRepeats::new(y)?))
}

pub fn ifv_closed_form(y: &[f64]) -> Result<f64> {
    Ok(AngioModel::Ifv.closed_form(&VoxelRepeats::new(y)?))
}

pub fn sv_closed_form(y: &[f64]) -> Result<f64> {
    Ok(AngioModel::Sv.closed_form(&VoxelRepeats::new(y)?))
}

pub fn ad_loglik_grad(x: f64, y: &[f64]) -> Result<f64> {
    AngioModel::Ad.loglik_grad(x, &VoxelRepeats::new(y)?)
}

pub fn ifv_loglik_grad(x: f64, y: &[f64]) -> Result<f64> {
    AngioModel::Ifv.loglik_grad(x, &VoxelRepeats::new(y)?)
}

pub fn sv_loglik_grad(x: f64, y: &[f64]) -> Result<f64> {
    AngioModel::Sv.loglik_grad(x, &VoxelRepeats::new(y)?)
}

/// Per-voxel closed-form estimates of a repeat volume, kept unclamped.
///
/// The log-likelihood gradient depends on the repeats only through these
/// estimates, so the reconstruction loop evaluates it without revisiting `Y`.
#[derive(Debug, Clone)]
pub struct LikelihoodField {
    model: AngioModel,
    dof: f64,
    mle: Array3<f64>,
}

impl LikelihoodField {
    pub fn new(y: &RepeatScanVolume, model: AngioModel) -> Result<Self> {
        let dims = y.dims();
        if dims.n_r < 2 {
            return Err(Error::InvalidDims(format!(
                "angiography needs at least 2 repeats, got {}",
                dims.n_r
            )));
        }
        let dof = model.dof(dims.n_r) as f64;
        let data = y.data();
        // Lay the repeat axis innermost so every voxel's series is contiguous.
        let series = data.view().permuted_axes([0, 2, 3, 1]);
        let mle = Zip::from(series.lanes(ndarray::Axis(3))).par_map_collect(
            |lane: ArrayView1<'_, f64>| model.sum_of_squares(lane.iter().copied()) / dof,
        );
        Ok(Self { model, dof, mle })
    }

    pub fn model(&self) -> AngioModel {
        self.model
    }

    pub fn shape(&self) -> [usize; 3] {
        let (b, a, s) = self.mle.dim();
        [b, a, s]
    }

    /// Unclamped closed-form estimates.
    pub fn mle(&self) -> &Array3<f64> {
        &self.mle
    }

    /// Closed-form estimates raised to `floor`.
    pub fn initial(&self, floor: f64) -> AngioVolume {
        AngioVolume::from_trusted(self.mle.mapv(|v| v.max(floor)))
    }

    pub fn check_shape(&self, x: &AngioVolume) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::ShapeMismatch {
                left: format!("{:?}", x.shape()),
                right: format!("{:?}", self.shape()),
            });
        }
        Ok(())
    }

    /// Elementwise log-likelihood gradient at `x`.
    pub fn gradient(&self, x: &AngioVolume) -> Result<Array3<f64>> {
        self.check_shape(x)?;
        if let Some(v) = x.data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "gradient needs positive variances, found {v}"
            )));
        }
        let dof = self.dof;
        Ok(Zip::from(x.data())
            .and(&self.mle)
            .par_map_collect(|&x, &mle| grad_from_mle(dof, mle, x)))
    }

    pub(crate) fn dof(&self) -> f64 {
        self.dof
    }
}

/// Closed-form estimate at every voxel, raised to the default positivity floor.
pub fn initial_octa(y: &RepeatScanVolume, model: AngioModel) -> Result<AngioVolume> {
    Ok(LikelihoodField::new(y, model)?.initial(DEFAULT_FLOOR))
}

/// Log-likelihood gradient at every voxel of `x`.
pub fn loglik_grad_volume(
    x: &AngioVolume,
    y: &RepeatScanVolume,
    model: AngioModel,
) -> Result<Array3<f64>> {
    let field = LikelihoodField::new(y, model)?;
    field.gradient(x)
}
