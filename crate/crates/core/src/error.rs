use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid volume data: {0}")]
    InvalidData(String),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}: bad magic (expected \"OCTV\")")]
    BadMagic { path: PathBuf },

    #[error("{path}: unsupported container version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u8,
        expected: u8,
    },

    #[error("{path}: truncated payload ({found} bytes, expected {expected})")]
    TruncatedPayload {
        path: PathBuf,
        found: usize,
        expected: usize,
    },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: non-finite value at element {index}")]
    NonFiniteValue { path: PathBuf, index: usize },

    #[error("{path}: expected a rank-{expected} volume, found rank {found}")]
    RankMismatch {
        path: PathBuf,
        expected: u8,
        found: u8,
    },

    #[error("reconstruction diverged at iteration {iteration}: non-finite value at voxel {voxel}")]
    Diverged { iteration: usize, voxel: usize },

    #[error("image export failed: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
