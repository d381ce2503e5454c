//! Evaluation: en-face projection, background thresholding, the median
//! baseline, image quality metrics and PNG export.

pub mod export;
pub mod metrics;

use ndarray::{s, Array2, Array3, Zip};

use crate::error::{Error, Result};
use crate::stats;
use crate::volume::{AngioVolume, EnFaceImage};

pub use export::{export_png, read_png, read_sidecar, Normalization};
pub use metrics::{mse, psnr, reference_range, ssim, Pixels, Psnr};

/// Projection percentile used for en-face images.
pub const DEFAULT_PERCENTILE: f64 = 98.0;
/// Relative background threshold for AD en-face images.
pub const DEFAULT_BACKGROUND_THRESHOLD: f64 = 0.1;

/// Flat depth slab `[top, bottom)` in sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlabSpec {
    pub top: usize,
    pub bottom: usize,
}

impl SlabSpec {
    pub fn new(top: usize, bottom: usize) -> Result<Self> {
        if top >= bottom {
            return Err(Error::InvalidParameter(format!(
                "empty slab [{top}, {bottom})"
            )));
        }
        Ok(Self { top, bottom })
    }

    pub fn full(n_s: usize) -> Self {
        Self {
            top: 0,
            bottom: n_s.max(1),
        }
    }

    pub fn depth(&self) -> usize {
        self.bottom - self.top
    }

    fn check(&self, n_s: usize) -> Result<()> {
        if self.top >= self.bottom || self.bottom > n_s {
            return Err(Error::InvalidParameter(format!(
                "slab [{}, {}) does not fit {} samples",
                self.top, self.bottom, n_s
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for SlabSpec {
    type Err = Error;

    /// Parses `top:bottom`.
    fn from_str(s: &str) -> Result<Self> {
        let (t, b) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("slab {s:?} is not top:bottom")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| Error::InvalidParameter(format!("slab bound {v:?}: {e}")))
        };
        SlabSpec::new(parse(t)?, parse(b)?)
    }
}

impl std::fmt::Display for SlabSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.top, self.bottom)
    }
}

/// Per-column percentile over the slab's samples.
pub fn enface_percentile(x: &AngioVolume, slab: SlabSpec, percentile: f64) -> Result<EnFaceImage> {
    let [n_b, n_a, n_s] = x.shape();
    slab.check(n_s)?;
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidParameter(format!(
            "percentile {percentile} outside [0, 100]"
        )));
    }
    let column = x.data().slice(s![.., .., slab.top..slab.bottom]);
    let mut img = Array2::zeros((n_b, n_a));
    Zip::from(&mut img)
        .and(column.lanes(ndarray::Axis(2)))
        .par_for_each(|px, lane| {
            let mut v = lane.to_vec();
            v.sort_unstable_by(f64::total_cmp);
            *px = stats::percentile_sorted(&v, percentile);
        });
    EnFaceImage::new(img)
}

/// Zeroes pixels below `rel_threshold` times the image's 99.9th percentile.
pub fn background_threshold(img: &EnFaceImage, rel_threshold: f64) -> Result<EnFaceImage> {
    if !(0.0..=1.0).contains(&rel_threshold) {
        return Err(Error::InvalidParameter(format!(
            "relative threshold {rel_threshold} outside [0, 1]"
        )));
    }
    let level = rel_threshold * stats::percentile(img.pixels(), 99.9);
    EnFaceImage::new(img.data().mapv(|v| if v < level { 0.0 } else { v }))
}

/// 3×3×3 median with edge replication.
pub fn median_filter_3d(x: &AngioVolume) -> AngioVolume {
    let data = x.data();
    let (n0, n1, n2) = data.dim();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = Array3::zeros((n0, n1, n2));
    Zip::indexed(&mut out).par_for_each(|(i, j, k), o| {
        let mut buf = [0.0f64; 27];
        let mut t = 0;
        for di in -1isize..=1 {
            let ii = clampi(i as isize + di, n0);
            for dj in -1isize..=1 {
                let jj = clampi(j as isize + dj, n1);
                for dk in -1isize..=1 {
                    buf[t] = data[[ii, jj, clampi(k as isize + dk, n2)]];
                    t += 1;
                }
            }
        }
        let (_, m, _) = buf.select_nth_unstable_by(13, f64::total_cmp);
        *o = *m;
    });
    AngioVolume::from_trusted(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vol(shape: [usize; 3], f: impl Fn(usize, usize, usize) -> f64) -> AngioVolume {
        AngioVolume::new(Array3::from_shape_fn(
            (shape[0], shape[1], shape[2]),
            |(i, j, k)| f(i, j, k),
        ))
        .unwrap()
    }

    #[test]
    fn projection_of_constant() {
        let x = vol([3, 4, 6], |_, _, _| 0.7);
        let img = enface_percentile(&x, SlabSpec::new(1, 5).unwrap(), 98.0).unwrap();
        assert_eq!((img.width(), img.height()), (3, 4));
        assert!(img.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn projection_interpolates() {
        let x = vol([1, 1, 4], |_, _, k| [5.0, 0.0, 1.0, 9.0][k]);
        let img = enface_percentile(&x, SlabSpec::new(1, 3).unwrap(), 98.0).unwrap();
        assert!((img.data()[[0, 0]] - 0.98).abs() < 1e-15);
        let max = enface_percentile(&x, SlabSpec::new(0, 4).unwrap(), 100.0).unwrap();
        assert_eq!(max.data()[[0, 0]], 9.0);
    }

    #[test]
    fn projection_rejects_bad_slab() {
        let x = vol([1, 1, 4], |_, _, _| 1.0);
        assert!(SlabSpec::new(2, 2).is_err());
        assert!(enface_percentile(&x, SlabSpec { top: 2, bottom: 5 }, 98.0).is_err());
        assert!("3-5".parse::<SlabSpec>().is_err());
        assert_eq!(
            "3:5".parse::<SlabSpec>().unwrap(),
            SlabSpec { top: 3, bottom: 5 }
        );
    }

    #[test]
    fn threshold_limits() {
        let img = EnFaceImage::new(Array2::from_shape_fn((10, 10), |(i, j)| {
            if (i + j) % 3 == 0 {
                1.0
            } else {
                0.1
            }
        }))
        .unwrap();
        assert_eq!(background_threshold(&img, 0.0).unwrap(), img);
        let half = background_threshold(&img, 0.5).unwrap();
        for (a, b) in half.data().iter().zip(img.data().iter()) {
            assert_eq!(*a, if *b == 0.1 { 0.0 } else { 1.0 });
        }
        let ramp = EnFaceImage::new(Array2::from_shape_fn((40, 50), |(i, j)| {
            (i * 50 + j) as f64
        }))
        .unwrap();
        let p = stats::percentile(ramp.pixels(), 99.9);
        let top = background_threshold(&ramp, 1.0).unwrap();
        for (a, b) in top.data().iter().zip(ramp.data().iter()) {
            assert_eq!(*a, if *b >= p { *b } else { 0.0 });
        }
    }

    #[test]
    fn median_constant_and_impulse() {
        let c = vol([4, 4, 4], |_, _, _| 0.3);
        assert_eq!(median_filter_3d(&c), c);
        let imp = vol(
            [5, 5, 5],
            |i, j, k| if (i, j, k) == (2, 2, 2) { 9.0 } else { 0.0 },
        );
        assert!(median_filter_3d(&imp).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_checkerboard_matches_neighbourhood_majority() {
        let n = 6;
        let x = vol(
            [n, n, n],
            |i, j, k| if (i + j + k) % 2 == 0 { 1.0 } else { 0.0 },
        );
        let out = median_filter_3d(&x);
        // Oracle: enumerate the replicated 27-neighbourhood and take the
        // majority value.
        for ((i, j, k), &v) in out.data().indexed_iter() {
            let mut ones = 0;
            for di in -1i32..=1 {
                for dj in -1i32..=1 {
                    for dk in -1i32..=1 {
                        let c = |a: usize, d: i32| (a as i32 + d).clamp(0, n as i32 - 1) as usize;
                        ones += x.data()[[c(i, di), c(j, dj), c(k, dk)]] as i32;
                    }
                }
            }
            let majority = if ones >= 14 { 1.0 } else { 0.0 };
            assert_eq!(v, majority, "({i},{j},{k})");
        }
        // interior sites flip: 14 of 27 neighbours carry the opposite parity
        assert_eq!(out.data()[[2, 2, 2]], 0.0);
        assert_eq!(out.data()[[2, 2, 3]], 1.0);
    }

    #[test]
    fn median_idempotent_away_from_transitions() {
        let x = vol([12, 12, 12], |i, _, _| if i < 6 { 0.0 } else { 1.0 });
        let once = median_filter_3d(&x);
        let twice = median_filter_3d(&once);
        assert_eq!(once, twice);
    }

    proptest! {
        #[test]
        fn projection_scales_linearly(
            values in proptest::collection::vec(0.0f64..1.0, 3 * 2 * 7),
            c in 0.1f64..10.0,
        ) {
            let x = AngioVolume::from_vec([3, 2, 7], values.clone()).unwrap();
            let cx = AngioVolume::from_vec([3, 2, 7], values.iter().map(|v| v * c).collect()).unwrap();
            let slab = SlabSpec::new(1, 6).unwrap();
            let p = enface_percentile(&x, slab, 98.0).unwrap();
            let pc = enface_percentile(&cx, slab, 98.0).unwrap();
            for (a, b) in p.data().iter().zip(pc.data().iter()) {
                prop_assert!((a * c - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn threshold_monotone(
            values in proptest::collection::vec(0.0f64..1.0, 36),
            lo in 0.0f64..1.0,
            hi in 0.0f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let img = EnFaceImage::new(Array2::from_shape_vec((6, 6), values).unwrap()).unwrap();
            let a = background_threshold(&img, lo).unwrap();
            let b = background_threshold(&img, hi).unwrap();
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                prop_assert!(!(*x == 0.0 && *y != 0.0));
            }
        }
    }
}
