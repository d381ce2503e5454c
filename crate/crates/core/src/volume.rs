//! Volume containers.
//!
//! Axis order everywhere is B-scan, [repeat,] A-scan, sample, with the
//! sample index fastest in memory. Values are held as `f64`; the on-disk
//! container stores binary32 (see [`crate::io`]).

use std::fmt;

use ndarray::{s, Array2, Array3, Array4, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::stats;

/// Extents of a repeated-scan acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n_b: usize,
    pub n_r: usize,
    pub n_a: usize,
    pub n_s: usize,
}

impl Dims {
    pub fn new(n_b: usize, n_r: usize, n_a: usize, n_s: usize) -> Result<Self> {
        let d = Self { n_b, n_r, n_a, n_s };
        if [n_b, n_r, n_a, n_s].contains(&0) {
            return Err(Error::InvalidDims(format!(
                "all extents must be >= 1, got {d}"
            )));
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.n_b * self.n_r * self.n_a * self.n_s
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extents of the angiography volume computed from these repeats.
    pub fn angio_shape(&self) -> [usize; 3] {
        [self.n_b, self.n_a, self.n_s]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n_b, self.n_r, self.n_a, self.n_s)
    }
}

fn check_values<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    for (i, &v) in values.into_iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidData(format!(
                "{what}: element {i} is {v}, expected finite and >= 0"
            )));
        }
    }
    Ok(())
}

/// Linear-scale OCT amplitudes, shape `(n_b, n_r, n_a, n_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatScanVolume {
    data: Array4<f64>,
}

impl RepeatScanVolume {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let (b, r, a, s) = data.dim();
        Dims::new(b, r, a, s)?;
        check_values(data.iter(), "amplitude")?;
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data })
    }

    pub fn from_vec(dims: Dims, values: Vec<f64>) -> Result<Self> {
        Dims::new(dims.n_b, dims.n_r, dims.n_a, dims.n_s)?;
        if values.len() != dims.len() {
            return Err(Error::InvalidData(format!(
                "{} values for dims {dims}",
                values.len()
            )));
        }
        let data = Array4::from_shape_vec((dims.n_b, dims.n_r, dims.n_a, dims.n_s), values)
            .expect("length checked");
        Self::new(data)
    }

    pub fn dims(&self) -> Dims {
        let (n_b, n_r, n_a, n_s) = self.data.dim();
        Dims { n_b, n_r, n_a, n_s }
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    /// Repeat series of one voxel, in acquisition order.
    pub fn repeats_at(&self, b: usize, a: usize, s: usize) -> ArrayView1<'_, f64> {
        self.data.slice(s![b, .., a, s])
    }
}

/// Per-voxel angiography values (variance estimates), shape `(n_b, n_a, n_s)`.
///
/// Values are finite and non-negative. Estimates produced by the models and
/// the reconstruction additionally respect the positivity floor.
#[derive(Debug, Clone, PartialEq)]
pub struct AngioVolume {
    data: Array3<f64>,
}

impl AngioVolume {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (b, a, s) = data.dim();
        if b == 0 || a == 0 || s == 0 {
            return Err(Error::InvalidDims(format!(
                "all extents must be >= 1, got {b}x{a}x{s}"
            )));
        }
        check_values(data.iter(), "angio value")?;
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data })
    }

    pub fn from_vec(shape: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.iter().product::<usize>() {
            return Err(Error::InvalidData(format!(
                "{} values for shape {:?}",
                values.len(),
                shape
            )));
        }
        let data = Array3::from_shape_vec((shape[0], shape[1], shape[2]), values)
            .map_err(|e| Error::InvalidDims(e.to_string()))?;
        Self::new(data)
    }

    /// Constant volume.
    pub fn filled(shape: [usize; 3], value: f64) -> Result<Self> {
        Self::new(Array3::from_elem((shape[0], shape[1], shape[2]), value))
    }

    /// Wraps data known to satisfy the invariants.
    pub(crate) fn from_trusted(data: Array3<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self { data }
    }

    pub fn shape(&self) -> [usize; 3] {
        let (b, a, s) = self.data.dim();
        [b, a, s]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        stats::mean(self.data.iter().copied())
    }

    /// Mean squared difference to another volume of the same shape.
    pub fn mse(&self, other: &AngioVolume) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left: format!("{:?}", self.shape()),
                right: format!("{:?}", other.shape()),
            });
        }
        Ok(stats::mean(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| (a - b) * (a - b)),
        ))
    }
}

/// En-face projection, indexed `[b, a]`: B-scans run along the image width
/// and A-scans along its height.
#[derive(Debug, Clone, PartialEq)]
pub struct EnFaceImage {
    data: Array2<f64>,
}

impl EnFaceImage {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (w, h) = data.dim();
        if w == 0 || h == 0 {
            return Err(Error::InvalidDims(format!("empty image {w}x{h}")));
        }
        check_values(data.iter(), "pixel")?;
        let data = data.as_standard_layout().into_owned();
        Ok(Self { data })
    }

    pub fn width(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Which repeats to keep when emulating shorter acquisitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepeatSelection {
    /// First, fifth and ninth of ten repeats.
    Three,
    /// Every second of ten repeats.
    Five,
    All,
    /// Arbitrary ascending repeat indices.
    Indices(Vec<usize>),
}

impl RepeatSelection {
    pub fn from_count(k: usize, n_r: usize) -> Result<Self> {
        match k {
            3 => Ok(Self::Three),
            5 => Ok(Self::Five),
            k if k == n_r => Ok(Self::All),
            k => Err(Error::InvalidParameter(format!(
                "no subsampling pattern for {k} of {n_r} repeats"
            ))),
        }
    }

    fn indices(&self, n_r: usize) -> Result<Vec<usize>> {
        let fixed = |k: usize, idx: &[usize]| {
            if k > n_r {
                return Err(Error::InvalidParameter(format!(
                    "cannot keep {k} of {n_r} repeats"
                )));
            }
            if n_r != 10 {
                return Err(Error::InvalidParameter(format!(
                    "the {k}-repeat pattern requires 10 repeats, got {n_r}"
                )));
            }
            Ok(idx.to_vec())
        };
        match self {
            Self::Three => fixed(3, &[0, 4, 8]),
            Self::Five => fixed(5, &[0, 2, 4, 6, 8]),
            Self::All => Ok((0..n_r).collect()),
            Self::Indices(idx) => {
                if idx.is_empty() {
                    return Err(Error::InvalidParameter("empty repeat index list".into()));
                }
                if idx.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParameter(
                        "repeat indices must be strictly increasing".into(),
                    ));
                }
                if let Some(&bad) = idx.iter().find(|&&i| i >= n_r) {
                    return Err(Error::InvalidParameter(format!(
                        "repeat index {bad} out of range for {n_r} repeats"
                    )));
                }
                Ok(idx.clone())
            }
        }
    }
}

/// Keeps a subset of the repeats, preserving their acquisition order.
pub fn subsample_repeats(
    vol: &RepeatScanVolume,
    selection: &RepeatSelection,
) -> Result<RepeatScanVolume> {
    let idx = selection.indices(vol.dims().n_r)?;
    if matches!(selection, RepeatSelection::All) {
        return Ok(vol.clone());
    }
    let data = vol.data.select(Axis(1), &idx);
    Ok(RepeatScanVolume { data })
}

/// Divides all amplitudes by the 99.9th-percentile amplitude and clamps to
/// `[0, 1]`.
///
/// The percentile is taken as the observed order statistic at or above the
/// rank, so the scaled volume has that sample at exactly 1.0 and a second
/// application is a no-op. Volumes whose percentile is zero are returned
/// unchanged.
pub fn normalize_amplitudes(vol: &RepeatScanVolume) -> RepeatScanVolume {
    let values: Vec<f64> = vol.data.iter().copied().collect();
    let scale = stats::percentile_higher(&values, 99.9);
    if scale <= 0.0 {
        return vol.clone();
    }
    let data = vol.data.mapv(|v| (v / scale).clamp(0.0, 1.0));
    RepeatScanVolume { data }
}
