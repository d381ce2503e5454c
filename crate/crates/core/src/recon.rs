//! MAP reconstruction by Landweber ascent on the per-voxel log-likelihood,
//! with a regularizer applied every `n_reg` iterations.
//!
//! ```text
//! X₀ = closed-form estimate (raised to the floor)
//! for k = 1..=n_iter:
//!     X ← max(X + λ·∇L(X), floor)
//!     if k % n_reg == 0: X ← R(X)
//! ```
//!
//! With a fixed λ the plain update overshoots wherever `λ·m/(2x²)` is large,
//! i.e. at voxels whose estimate is small: the iterate is thrown below the
//! floor and the next gradient (∝ 1/floor²) sends it to an enormous value.
//! The optional overshoot guard stops any update at the voxel's closed-form
//! maximizer instead of letting it cross to the other side. It never changes
//! an update that does not cross, so it is inert for step sizes that are
//! already safe.

use ndarray::{Array3, Zip};

use crate::error::{Error, Result};
use crate::eval::{self, Psnr, SlabSpec};
use crate::models::{AngioModel, LikelihoodField};
use crate::regularizers::{
    RegularizerKind, RegularizerSpec, ThresholdMode, DEFAULT_WAVELET_LEVELS,
};
use crate::volume::{AngioVolume, EnFaceImage, RepeatScanVolume};
use crate::DEFAULT_FLOOR;

pub const AD_STEP_SIZE: f64 = 5e-6;
pub const IFV_STEP_SIZE: f64 = 3e-6;
pub const WAVELET_THRESHOLD: f64 = 5e-4;
pub const WAVELET_ITERATIONS: usize = 1000;
pub const TV_WEIGHT: f64 = 1e-4;
pub const TV_INNER_ITERATIONS: usize = 10;
pub const TV_ITERATIONS: usize = 2000;
pub const DEFAULT_N_REG: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    pub model: AngioModel,
    pub step_size: f64,
    pub n_iter: usize,
    /// Regularizer cadence in iterations.
    pub n_reg: usize,
    pub regularizer: RegularizerSpec,
    /// Relative change of the MSE against X₀ below which iteration stops;
    /// 0 disables early stopping.
    pub stop_tol: f64,
    pub floor: f64,
    pub overshoot_guard: bool,
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return bad(format!(
                "step size must be finite and >= 0, got {}",
                self.step_size
            ));
        }
        if self.n_iter == 0 {
            return bad("n_iter must be >= 1".into());
        }
        if self.n_reg == 0 {
            return bad("n_reg must be >= 1".into());
        }
        if !(self.stop_tol >= 0.0) || !self.stop_tol.is_finite() {
            return bad(format!("stop_tol must be >= 0, got {}", self.stop_tol));
        }
        if !(self.floor > 0.0) || !self.floor.is_finite() {
            return bad(format!("floor must be positive, got {}", self.floor));
        }
        self.regularizer.validate()
    }
}

/// Default hyperparameters for a model/regularizer pair.
pub fn default_config(model: AngioModel, kind: RegularizerKind) -> ReconConfig {
    let step_size = match model {
        AngioModel::Ad => AD_STEP_SIZE,
        AngioModel::Ifv | AngioModel::Sv => IFV_STEP_SIZE,
    };
    let (regularizer, n_iter) = match kind {
        RegularizerKind::None => (RegularizerSpec::None, WAVELET_ITERATIONS),
        RegularizerKind::Wavelet => (
            RegularizerSpec::WaveletShrinkage {
                threshold: WAVELET_THRESHOLD,
                levels: DEFAULT_WAVELET_LEVELS,
                mode: ThresholdMode::Hard,
            },
            WAVELET_ITERATIONS,
        ),
        RegularizerKind::TotalVariation => (
            RegularizerSpec::TotalVariation {
                weight: TV_WEIGHT,
                inner_iterations: TV_INNER_ITERATIONS,
            },
            TV_ITERATIONS,
        ),
    };
    ReconConfig {
        model,
        step_size,
        n_iter,
        n_reg: DEFAULT_N_REG,
        regularizer,
        stop_tol: 0.0,
        floor: DEFAULT_FLOOR,
        overshoot_guard: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mse_vs_initial: f64,
    pub psnr: Option<Psnr>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    /// Iteration at which the MSE stopping rule fired, if it did.
    pub stopped_at: Option<usize>,
}

impl IterationTrace {
    pub fn has_metrics(&self) -> bool {
        self.records.iter().any(|r| r.psnr.is_some())
    }
}

/// Reference volume for per-iteration PSNR/SSIM, compared on en-face
/// projections of a slab.
#[derive(Debug, Clone)]
pub struct TraceReference {
    pub volume: AngioVolume,
    pub slab: SlabSpec,
    pub percentile: f64,
    image: EnFaceImage,
    range: f64,
}

impl TraceReference {
    pub fn new(volume: AngioVolume, slab: SlabSpec, percentile: f64) -> Result<Self> {
        let image = eval::enface_percentile(&volume, slab, percentile)?;
        let range = eval::reference_range(&image);
        Ok(Self {
            volume,
            slab,
            percentile,
            image,
            range,
        })
    }

    fn metrics(&self, x: &AngioVolume) -> Result<(Psnr, Option<f64>)> {
        if x.shape() != self.volume.shape() {
            return Err(Error::ShapeMismatch {
                left: format!("{:?}", x.shape()),
                right: format!("{:?}", self.volume.shape()),
            });
        }
        let img = eval::enface_percentile(x, self.slab, self.percentile)?;
        let psnr = eval::psnr(&img, &self.image, self.range)?;
        let ssim = eval::ssim(&img, &self.image, self.range).ok();
        Ok((psnr, ssim))
    }
}

fn first_non_finite(x: &Array3<f64>) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}

fn step_in_place(x: &mut Array3<f64>, field: &LikelihoodField, step: f64, floor: f64, guard: bool) {
    let dof = field.dof();
    Zip::from(x).and(field.mle()).par_for_each(|x, &mle| {
        let grad = dof * (mle - *x) / (2.0 * *x * *x);
        let mut next = *x + step * grad;
        if guard && (next - mle) * (*x - mle) < 0.0 {
            next = mle;
        }
        *x = next.max(floor);
    });
}

/// One Landweber update `max(X + λ·∇L(X), floor)` with the default floor.
pub fn landweber_step(
    x: &AngioVolume,
    y: &RepeatScanVolume,
    model: AngioModel,
    step_size: f64,
) -> Result<AngioVolume> {
    let field = LikelihoodField::new(y, model)?;
    landweber_step_field(x, &field, step_size, DEFAULT_FLOOR, false)
}

/// Landweber update against precomputed per-voxel estimates.
pub fn landweber_step_field(
    x: &AngioVolume,
    field: &LikelihoodField,
    step_size: f64,
    floor: f64,
    overshoot_guard: bool,
) -> Result<AngioVolume> {
    field.check_shape(x)?;
    if let Some(v) = x.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "iterate must be positive, found {v}"
        )));
    }
    let mut next = x.data().clone();
    step_in_place(&mut next, field, step_size, floor, overshoot_guard);
    if let Some(voxel) = first_non_finite(&next) {
        return Err(Error::Diverged {
            iteration: 0,
            voxel,
        });
    }
    Ok(AngioVolume::from_trusted(next))
}

/// Largest step size for which plain updates started anywhere in
/// `[lower·x*, ∞)` move monotonically toward `x*` without crossing it, for
/// every voxel.
///
/// The update `x + λm(x* - x)/(2x²)` stays on its side of `x*` exactly when
/// `λm/2 ≤ x²`, so the binding case is the smallest start, `lower·min x*`.
pub fn monotone_step_bound(field: &LikelihoodField, floor: f64, lower: f64) -> f64 {
    let min_mle = field
        .mle()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v.max(floor)));
    let start = (lower * min_mle).min(min_mle);
    2.0 * start * start / field.dof()
}

/// Runs the reconstruction, recording an [`IterationTrace`].
pub fn reconstruct(
    y: &RepeatScanVolume,
    cfg: &ReconConfig,
    reference: Option<&TraceReference>,
) -> Result<(AngioVolume, IterationTrace)> {
    reconstruct_observed(y, cfg, reference, |_, _| {})
}

/// As [`reconstruct`], calling `observe` after every recorded iteration
/// (including iteration 0) with the record and the current iterate.
pub fn reconstruct_observed<F>(
    y: &RepeatScanVolume,
    cfg: &ReconConfig,
    reference: Option<&TraceReference>,
    mut observe: F,
) -> Result<(AngioVolume, IterationTrace)>
where
    F: FnMut(&IterationRecord, &AngioVolume),
{
    cfg.validate()?;
    let field = LikelihoodField::new(y, cfg.model)?;
    let x0 = field.initial(cfg.floor);
    if let Some(r) = reference {
        field.check_shape(&r.volume)?;
    }

    let record = |iteration: usize, x: &AngioVolume, x0: &AngioVolume| -> Result<IterationRecord> {
        let mse_vs_initial = x.mse(x0)?;
        let (psnr, ssim) = match reference {
            Some(r) => {
                let (p, s) = r.metrics(x)?;
                (Some(p), s)
            }
            None => (None, None),
        };
        Ok(IterationRecord {
            iteration,
            mse_vs_initial,
            psnr,
            ssim,
        })
    };

    let mut trace = IterationTrace::default();
    let first = record(0, &x0, &x0)?;
    observe(&first, &x0);
    trace.records.push(first);

    let mut x = x0.data().clone();
    let mut prev_mse = 0.0;
    for k in 1..=cfg.n_iter {
        step_in_place(
            &mut x,
            &field,
            cfg.step_size,
            cfg.floor,
            cfg.overshoot_guard,
        );
        if let Some(voxel) = first_non_finite(&x) {
            return Err(Error::Diverged {
                iteration: k,
                voxel,
            });
        }
        let mut current = AngioVolume::from_trusted(x);
        if k % cfg.n_reg == 0 && cfg.regularizer != RegularizerSpec::None {
            let reg = cfg.regularizer.apply(&current, cfg.floor)?;
            if let Some(voxel) = first_non_finite(reg.data()) {
                return Err(Error::Diverged {
                    iteration: k,
                    voxel,
                });
            }
            current = reg;
        }
        let rec = record(k, &current, &x0)?;
        observe(&rec, &current);
        trace.records.push(rec);
        x = current.into_data();

        if cfg.stop_tol > 0.0 {
            let change = (rec.mse_vs_initial - prev_mse).abs() / prev_mse.max(1e-12);
            if change < cfg.stop_tol {
                trace.stopped_at = Some(k);
                break;
            }
        }
        prev_mse = rec.mse_vs_initial;
    }
    Ok((AngioVolume::from_trusted(x), trace))
}
