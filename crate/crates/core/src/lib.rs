//! Maximum a posteriori reconstruction of OCT angiography volumes from
//! repeated B-scans.
//!
//! Each voxel's decorrelation (or interframe) variance is estimated by
//! Landweber ascent on a per-voxel Gaussian log-likelihood, interleaved with
//! a denoising step (Haar wavelet shrinkage or Chambolle total variation).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod phantom;
pub mod recon;
pub mod regularizers;
pub mod stats;
pub mod volume;

/// Lower bound applied to every variance estimate.
pub const DEFAULT_FLOOR: f64 = 1e-8;

pub use error::{Error, Result};
pub use models::{AngioModel, LikelihoodField, VoxelRepeats};
pub use recon::{default_config, reconstruct, IterationTrace, ReconConfig};
pub use regularizers::{RegularizerKind, RegularizerSpec};
pub use volume::{AngioVolume, Dims, EnFaceImage, RepeatScanVolume, RepeatSelection};
