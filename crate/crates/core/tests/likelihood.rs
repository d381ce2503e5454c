//! Analytic gradients and closed forms checked against an explicit
//! log-likelihood written from the Gaussian density.

use octa_core::models::{AngioModel, VoxelRepeats};
use octa_core::phantom::{brute_force_mle, LogGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Residuals entering the likelihood, one per Gaussian factor.
fn residuals(model: AngioModel, y: &[f64]) -> Vec<f64> {
    match model {
        AngioModel::Ifv => y.windows(2).map(|w| w[0] - w[1]).collect(),
        AngioModel::Ad => y
            .windows(2)
            .map(|w| {
                let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
                if n == 0.0 {
                    0.0
                } else {
                    (w[0] - w[1]) / n
                }
            })
            .collect(),
        AngioModel::Sv => {
            let m = y.iter().sum::<f64>() / y.len() as f64;
            y.iter().map(|v| v - m).collect()
        }
    }
}

fn log_likelihood(model: AngioModel, x: f64, y: &[f64]) -> f64 {
    residuals(model, y)
        .iter()
        .map(|r| (-(r * r) / (2.0 * x)).exp() / (2.0 * std::f64::consts::PI * x).sqrt())
        .map(f64::ln)
        .sum()
}

fn central_difference(model: AngioModel, x: f64, y: &[f64]) -> f64 {
    let h = 1e-3 * x;
    let f = |t: f64| log_likelihood(model, t, y);
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.05..1.0)).collect()
}

const MODELS: [AngioModel; 3] = [AngioModel::Ad, AngioModel::Ifv, AngioModel::Sv];

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for model in MODELS {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let n = [2, 3, 5, 10][rng.gen_range(0..4)];
            let y = random_series(&mut rng, n);
            let x = rng.gen_range(1e-3..2.0);
            let g = model
                .loglik_grad(x, &VoxelRepeats::new(&y).unwrap())
                .unwrap();
            let fd = central_difference(model, x, &y);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()));
        }
        assert!(worst < 1e-5, "{model}: {worst:e}");
    }
}

#[test]
fn closed_forms_match_grid_search() {
    let grid = LogGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for model in [AngioModel::Ad, AngioModel::Ifv] {
        for _ in 0..300 {
            let n = [2, 3, 5, 10][rng.gen_range(0..4)];
            let y = random_series(&mut rng, n);
            let v = VoxelRepeats::new(&y).unwrap();
            let closed = model.closed_form(&v).clamp(grid.lo, grid.hi);
            let best = brute_force_mle(&v, model, &grid);
            assert!(
                (best - closed).abs() <= grid.cell_width_at(closed),
                "{model} {y:?}: grid {best}, closed {closed}"
            );
        }
    }
}

#[test]
fn gradient_vanishes_only_at_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for model in MODELS {
        for _ in 0..200 {
            let n = rng.gen_range(2..12);
            let y = random_series(&mut rng, n);
            let v = VoxelRepeats::new(&y).unwrap();
            let xs = model.closed_form(&v);
            if xs == 0.0 {
                continue;
            }
            assert_eq!(model.loglik_grad(xs, &v).unwrap(), 0.0);
            assert!(model.loglik_grad(0.5 * xs, &v).unwrap() > 0.0);
            assert!(model.loglik_grad(2.0 * xs, &v).unwrap() < 0.0);
        }
    }
}

#[test]
fn decorrelation_is_scale_free_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let y: Vec<f64> = (0..rng.gen_range(2..12))
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        let c = rng.gen_range(0.01..100.0);
        let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
        let a = AngioModel::Ad.closed_form(&VoxelRepeats::new(&y).unwrap());
        let b = AngioModel::Ad.closed_form(&VoxelRepeats::new(&scaled).unwrap());
        assert!((a - b).abs() <= 1e-12, "{a} {b}");
        assert!((0.0..=1.0).contains(&a));

        let i = AngioModel::Ifv.closed_form(&VoxelRepeats::new(&y).unwrap());
        let j = AngioModel::Ifv.closed_form(&VoxelRepeats::new(&scaled).unwrap());
        assert!((j - c * c * i).abs() <= 1e-12 * j.max(1.0));
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(VoxelRepeats::new(&[1.0]).is_err());
    assert!(VoxelRepeats::new(&[1.0, f64::NAN]).is_err());
    assert!(VoxelRepeats::new(&[1.0, -0.5]).is_err());
    let v = VoxelRepeats::new(&[1.0, 2.0]).unwrap();
    for model in MODELS {
        assert!(model.loglik_grad(0.0, &v).is_err());
        assert!(model.loglik_grad(-1.0, &v).is_err());
    }
}
