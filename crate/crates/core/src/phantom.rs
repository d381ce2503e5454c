//! Synthetic repeated-scan phantoms with known per-voxel variance, and a
//! grid-search maximum likelihood oracle.
//!
//! A scene is a static amplitude baseline (a bright retina-like slab in a
//! dim surround) plus a variance field that is raised along a few tubular
//! vessels running laterally inside the slab. Repeats are drawn as
//! `yᵢ = baseline + nᵢ` with `nᵢ ~ N(0, x/2)` i.i.d., so consecutive
//! differences are `N(0, x)`: exactly the interframe-variance model.

use std::fmt::Write as _;

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::SlabSpec;
use crate::models::{AngioModel, VoxelRepeats};
use crate::volume::{AngioVolume, Dims, RepeatScanVolume};

pub const SLAB_AMPLITUDE: f64 = 0.5;
pub const SURROUND_AMPLITUDE: f64 = 0.05;
pub const DEFAULT_VESSEL_VARIANCE: f64 = 0.02;
pub const DEFAULT_BACKGROUND_VARIANCE: f64 = 0.002;
pub const DEFAULT_VESSELS: usize = 12;
pub const MIN_VESSEL_RADIUS: f64 = 1.0;
pub const MAX_VESSEL_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub shape: [usize; 3],
    pub n_vessels: usize,
    pub vessel_variance: f64,
    pub background_variance: f64,
    pub seed: u64,
}

impl SceneParams {
    pub fn new(shape: [usize; 3], seed: u64) -> Self {
        Self {
            shape,
            n_vessels: DEFAULT_VESSELS,
            vessel_variance: DEFAULT_VESSEL_VARIANCE,
            background_variance: DEFAULT_BACKGROUND_VARIANCE,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomScene {
    pub params: SceneParams,
    pub x_true: AngioVolume,
    /// Static tissue amplitude per voxel.
    pub baseline: Array3<f64>,
    /// Depth range of the bright slab; all vessels lie inside it.
    pub slab: SlabSpec,
}

impl PhantomScene {
    pub fn shape(&self) -> [usize; 3] {
        self.params.shape
    }

    /// Fraction of voxels carrying the vessel variance.
    pub fn vessel_fraction(&self) -> f64 {
        let v = self.params.vessel_variance;
        self.x_true.data().iter().filter(|&&x| x == v).count() as f64 / self.x_true.len() as f64
    }

    /// `key=value` description of the scene.
    pub fn manifest_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "shape={}x{}x{}", p.shape[0], p.shape[1], p.shape[2]);
        let _ = writeln!(s, "n_vessels={}", p.n_vessels);
        let _ = writeln!(s, "vessel_variance={:e}", p.vessel_variance);
        let _ = writeln!(s, "background_variance={:e}", p.background_variance);
        let _ = writeln!(s, "slab={}", self.slab);
        let _ = writeln!(s, "slab_amplitude={SLAB_AMPLITUDE:e}");
        let _ = writeln!(s, "surround_amplitude={SURROUND_AMPLITUDE:e}");
        let _ = writeln!(s, "seed={}", p.seed);
        s
    }
}

/// Slab used by generated scenes: the middle 40% of the depth axis.
pub fn scene_slab(n_s: usize) -> SlabSpec {
    let top = n_s * 3 / 10;
    let bottom = (n_s * 7).div_ceil(10).max(top + 1).min(n_s.max(1));
    SlabSpec {
        top: top.min(bottom - 1),
        bottom,
    }
}

fn point_segment_dist2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = if len2 > 0.0 {
        (ap.iter().zip(&ab).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (0..3).map(|i| (ap[i] - t * ab[i]).powi(2)).sum()
}

fn rasterize_tube(mask: &mut Array3<bool>, points: &[[f64; 3]], radius: f64) {
    let (n0, n1, n2) = mask.dim();
    let r2 = radius * radius;
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let lo = |d: usize| (a[d].min(b[d]) - radius).floor().max(0.0) as usize;
        let hi = |d: usize, n: usize| ((a[d].max(b[d]) + radius).ceil() as usize).min(n - 1);
        for i in lo(0)..=hi(0, n0) {
            for j in lo(1)..=hi(1, n1) {
                for k in lo(2)..=hi(2, n2) {
                    if point_segment_dist2([i as f64, j as f64, k as f64], a, b) <= r2 {
                        mask[[i, j, k]] = true;
                    }
                }
            }
        }
    }
}

/// Vessel scene with `n_vessels` piecewise-linear tubes of radius 1–3 voxels.
pub fn make_vessel_scene(params: SceneParams) -> Result<PhantomScene> {
    let [n_b, n_a, n_s] = params.shape;
    if n_b == 0 || n_a == 0 || n_s == 0 {
        return Err(Error::InvalidDims(format!(
            "scene extents must be >= 1, got {n_b}x{n_a}x{n_s}"
        )));
    }
    let (v, bg) = (params.vessel_variance, params.background_variance);
    if !(bg >= 0.0) || !v.is_finite() || !(v > bg) {
        return Err(Error::InvalidParameter(format!(
            "need vessel variance > background variance >= 0, got {v} and {bg}"
        )));
    }
    let slab = scene_slab(n_s);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut mask = Array3::from_elem((n_b, n_a, n_s), false);

    for _ in 0..params.n_vessels {
        let radius = rng.gen_range(MIN_VESSEL_RADIUS..=MAX_VESSEL_RADIUS);
        // Keep the tube inside the slab where it is deep enough.
        let (d_lo, d_hi) = {
            let lo = slab.top as f64 + radius;
            let hi = slab.bottom as f64 - 1.0 - radius;
            if lo <= hi {
                (lo, hi)
            } else {
                let mid = (slab.top + slab.bottom - 1) as f64 / 2.0;
                (mid, mid)
            }
        };
        let along_b = rng.gen_bool(0.5);
        let (len_main, len_cross) = if along_b { (n_b, n_a) } else { (n_a, n_b) };
        let n_pts = rng.gen_range(3..=5);
        let mut points = Vec::with_capacity(n_pts);
        for t in 0..n_pts {
            let main = (len_main as f64 - 1.0) * t as f64 / (n_pts - 1) as f64;
            let cross = rng.gen_range(0.0..=(len_cross as f64 - 1.0).max(0.0));
            let depth = if d_hi > d_lo {
                rng.gen_range(d_lo..=d_hi)
            } else {
                d_lo
            };
            points.push(if along_b {
                [main, cross, depth]
            } else {
                [cross, main, depth]
            });
        }
        rasterize_tube(&mut mask, &points, radius);
    }

    let x_true = AngioVolume::new(mask.mapv(|m| if m { v } else { bg }))?;
    let baseline = Array3::from_shape_fn((n_b, n_a, n_s), |(_, _, s)| {
        if s >= slab.top && s < slab.bottom {
            SLAB_AMPLITUDE
        } else {
            SURROUND_AMPLITUDE
        }
    });
    Ok(PhantomScene {
        params,
        x_true,
        baseline,
        slab,
    })
}

/// Draws `n_r` repeats of every voxel; amplitudes are clamped at zero.
pub fn simulate_repeats(scene: &PhantomScene, n_r: usize, seed: u64) -> Result<RepeatScanVolume> {
    if n_r < 2 {
        return Err(Error::InvalidDims(format!(
            "need at least 2 repeats, got {n_r}"
        )));
    }
    let [n_b, n_a, n_s] = scene.shape();
    Dims::new(n_b, n_r, n_a, n_s)?;
    let sigma = scene.x_true.data().mapv(|x| (x / 2.0).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array4::zeros((n_b, n_r, n_a, n_s));
    for ((b, _r, a, s), y) in data.indexed_iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *y = (scene.baseline[[b, a, s]] + sigma[[b, a, s]] * z).max(0.0);
    }
    RepeatScanVolume::new(data)
}

/// Log-spaced search grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 4.0,
            count: 10_000,
        }
    }
}

impl LogGrid {
    pub fn point(&self, i: usize) -> f64 {
        if i == 0 {
            return self.lo;
        }
        if i + 1 == self.count {
            return self.hi;
        }
        let t = i as f64 / (self.count - 1) as f64;
        (self.lo.ln() + t * (self.hi.ln() - self.lo.ln())).exp()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.point(i))
    }

    /// Spacing between the grid points bracketing `x` (clamped to the grid).
    pub fn cell_width_at(&self, x: f64) -> f64 {
        let t = ((x.clamp(self.lo, self.hi).ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
            * (self.count - 1) as f64)
            .floor() as usize;
        let i = t.min(self.count - 2);
        self.point(i + 1) - self.point(i)
    }
}

/// Log-likelihood of variance `x` for a repeat series, written out term by
/// term from the Gaussian density.
pub fn explicit_log_likelihood(model: AngioModel, x: f64, y: &[f64]) -> f64 {
    let gauss = |r2: f64| -0.5 * (2.0 * std::f64::consts::PI * x).ln() - r2 / (2.0 * x);
    match model {
        AngioModel::Ifv => y.windows(2).map(|w| gauss((w[0] - w[1]).powi(2))).sum(),
        AngioModel::Ad => y
            .windows(2)
            .map(|w| {
                let energy = w[0].powi(2) + w[1].powi(2);
                let r2 = if energy > 0.0 {
                    (w[0] - w[1]).powi(2) / energy
                } else {
                    0.0
                };
                gauss(r2)
            })
            .sum(),
        AngioModel::Sv => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| gauss((v - mean).powi(2))).sum()
        }
    }
}

/// Grid point maximizing the explicit log-likelihood; ties go to the
/// smaller variance.
pub fn brute_force_mle(y: &VoxelRepeats, model: AngioModel, grid: &LogGrid) -> f64 {
    let mut best = (f64::NEG_INFINITY, grid.lo);
    for x in grid.points() {
        let ll = explicit_log_likelihood(model, x, y.values());
        if ll > best.0 {
            best = (ll, x);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ad_closed_form, ifv_closed_form};

    fn nearest_grid_point(grid: &LogGrid, x: f64) -> f64 {
        grid.points()
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
            .unwrap()
    }

    #[test]
    fn no_vessels_means_constant_variance() {
        let mut p = SceneParams::new([8, 9, 10], 1);
        p.n_vessels = 0;
        let scene = make_vessel_scene(p).unwrap();
        assert!(scene
            .x_true
            .data()
            .iter()
            .all(|&x| x == p.background_variance));
    }

    #[test]
    fn same_seed_same_scene() {
        let p = SceneParams::new([16, 16, 16], 42);
        assert_eq!(make_vessel_scene(p).unwrap(), make_vessel_scene(p).unwrap());
        let q = SceneParams { seed: 43, ..p };
        assert_ne!(
            make_vessel_scene(p).unwrap().x_true,
            make_vessel_scene(q).unwrap().x_true
        );
    }

    #[test]
    fn one_vessel_fraction() {
        for seed in 0..5 {
            let mut p = SceneParams::new([32, 32, 32], seed);
            p.n_vessels = 1;
            let f = make_vessel_scene(p).unwrap().vessel_fraction();
            assert!(f > 0.0 && f < 0.2, "seed {seed}: {f}");
        }
    }

    #[test]
    fn vessels_stay_inside_slab() {
        let scene = make_vessel_scene(SceneParams::new([24, 24, 40], 5)).unwrap();
        let v = scene.params.vessel_variance;
        for ((_, _, s), &x) in scene.x_true.data().indexed_iter() {
            if x == v {
                assert!(s >= scene.slab.top && s < scene.slab.bottom);
            }
        }
    }

    #[test]
    fn scene_parameter_errors() {
        let mut p = SceneParams::new([4, 4, 4], 0);
        p.vessel_variance = p.background_variance;
        assert!(make_vessel_scene(p).is_err());
        let mut p = SceneParams::new([4, 4, 4], 0);
        p.background_variance = -1.0;
        assert!(make_vessel_scene(p).is_err());
        assert!(make_vessel_scene(SceneParams::new([4, 0, 4], 0)).is_err());
    }

    #[test]
    fn zero_variance_reproduces_baseline() {
        let mut p = SceneParams::new([4, 5, 6], 3);
        p.n_vessels = 0;
        p.background_variance = 0.0;
        p.vessel_variance = 1.0;
        let scene = make_vessel_scene(p).unwrap();
        let y = simulate_repeats(&scene, 4, 9).unwrap();
        for ((b, _, a, s), &v) in y.data().indexed_iter() {
            assert_eq!(v, scene.baseline[[b, a, s]]);
        }
        assert!(simulate_repeats(&scene, 1, 9).is_err());
    }

    #[test]
    fn single_voxel_variance_concentrates() {
        let mut p = SceneParams::new([1, 1, 1], 0);
        p.n_vessels = 0;
        p.background_variance = 0.04;
        p.vessel_variance = 1.0;
        let scene = make_vessel_scene(p).unwrap();
        let n_r = 10_000;
        let y = simulate_repeats(&scene, n_r, 17).unwrap();
        let series = y.repeats_at(0, 0, 0).to_vec();
        let est = ifv_closed_form(&series).unwrap();
        // Consecutive squared differences share a noise sample, so the
        // estimator variance is 3x²/(n-1) rather than the independent 2x²/(n-1).
        let sd = 0.04 * (3.0 / (n_r as f64 - 1.0)).sqrt();
        assert!((est - 0.04).abs() < 3.0 * sd, "{est}");

        let mean = series.iter().sum::<f64>() / n_r as f64;
        let se = (0.02f64).sqrt() / (n_r as f64).sqrt();
        assert!((mean - SLAB_AMPLITUDE).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn grid_endpoints() {
        let g = LogGrid::default();
        assert_eq!(g.point(0), 1e-6);
        assert_eq!(g.point(9999), 4.0);
        assert!(g.cell_width_at(1.0) > 0.0);
    }

    #[test]
    fn brute_force_examples() {
        let g = LogGrid::default();
        let y = [1.0, 3.0];
        let x = brute_force_mle(&VoxelRepeats::new(&y).unwrap(), AngioModel::Ifv, &g);
        assert_eq!(x, nearest_grid_point(&g, ifv_closed_form(&y).unwrap()));
        assert_eq!(x, nearest_grid_point(&g, 4.0));

        let y = [1.0, 1.0];
        let x = brute_force_mle(&VoxelRepeats::new(&y).unwrap(), AngioModel::Ad, &g);
        assert_eq!(x, g.lo);

        let y = [3.0, 4.0, 3.0];
        let x = brute_force_mle(&VoxelRepeats::new(&y).unwrap(), AngioModel::Ad, &g);
        assert_eq!(x, nearest_grid_point(&g, ad_closed_form(&y).unwrap()));
        assert!((x - 0.04).abs() <= g.cell_width_at(0.04));
    }
}
