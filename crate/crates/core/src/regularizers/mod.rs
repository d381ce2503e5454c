//! Priors applied periodically during reconstruction.

pub mod tv;
pub mod wavelet;

use std::fmt;

use crate::error::{Error, Result};
use crate::volume::AngioVolume;

pub use tv::{total_variation, tv_denoise, tv_denoise_with};
pub use wavelet::{
    haar_dwt_3d, haar_idwt_3d, wavelet_shrinkage, wavelet_shrinkage_with, HaarCoefficients,
    ThresholdMode,
};

/// Decomposition depth used when none is given.
pub const DEFAULT_WAVELET_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerSpec {
    None,
    WaveletShrinkage {
        threshold: f64,
        levels: usize,
        mode: ThresholdMode,
    },
    TotalVariation {
        weight: f64,
        inner_iterations: usize,
    },
}

/// Regularizer family without parameters, used to pick defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    None,
    Wavelet,
    TotalVariation,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Wavelet => "wavelet",
            RegularizerKind::TotalVariation => "tv",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "wavelet" | "ws" => Ok(Self::Wavelet),
            "tv" => Ok(Self::TotalVariation),
            other => Err(Error::InvalidParameter(format!(
                "unknown regularizer {other:?} (expected none, wavelet or tv)"
            ))),
        }
    }
}

impl RegularizerSpec {
    pub fn kind(&self) -> RegularizerKind {
        match self {
            RegularizerSpec::None => RegularizerKind::None,
            RegularizerSpec::WaveletShrinkage { .. } => RegularizerKind::Wavelet,
            RegularizerSpec::TotalVariation { .. } => RegularizerKind::TotalVariation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerSpec::None => Ok(()),
            RegularizerSpec::WaveletShrinkage {
                threshold, levels, ..
            } => {
                if !(threshold >= 0.0) || !threshold.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "wavelet threshold must be finite and >= 0, got {threshold}"
                    )));
                }
                if levels == 0 {
                    return Err(Error::InvalidParameter(
                        "wavelet levels must be >= 1".into(),
                    ));
                }
                Ok(())
            }
            RegularizerSpec::TotalVariation {
                weight,
                inner_iterations,
            } => {
                if !(weight > 0.0) || !weight.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "TV weight must be positive, got {weight}"
                    )));
                }
                if inner_iterations == 0 {
                    return Err(Error::InvalidParameter(
                        "TV inner iterations must be >= 1".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Applies the prior, raising the result to `floor`.
    pub fn apply(&self, x: &AngioVolume, floor: f64) -> Result<AngioVolume> {
        match *self {
            RegularizerSpec::None => Ok(x.clone()),
            RegularizerSpec::WaveletShrinkage {
                threshold,
                levels,
                mode,
            } => wavelet_shrinkage_with(x, threshold, levels, mode, floor),
            RegularizerSpec::TotalVariation {
                weight,
                inner_iterations,
            } => tv_denoise_with(x, weight, inner_iterations, floor),
        }
    }
}
