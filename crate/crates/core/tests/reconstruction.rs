use octa_core::eval::SlabSpec;
use octa_core::models::LikelihoodField;
use octa_core::phantom::{make_vessel_scene, simulate_repeats, SceneParams};
use octa_core::recon::{
    default_config, landweber_step_field, monotone_step_bound, reconstruct, TraceReference,
};
use octa_core::{AngioModel, AngioVolume, RegularizerKind, RegularizerSpec, DEFAULT_FLOOR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn phantom_repeats(
    shape: [usize; 3],
    n_r: usize,
    vessel: f64,
    background: f64,
) -> octa_core::RepeatScanVolume {
    let mut p = SceneParams::new(shape, 3);
    p.vessel_variance = vessel;
    p.background_variance = background;
    simulate_repeats(&make_vessel_scene(p).unwrap(), n_r, 4).unwrap()
}

#[test]
fn unregularized_run_keeps_initial_estimate() {
    let y = phantom_repeats([32, 32, 32], 3, 0.02, 0.002);
    for model in [AngioModel::Ad, AngioModel::Ifv] {
        let x0 = LikelihoodField::new(&y, model)
            .unwrap()
            .initial(DEFAULT_FLOOR);
        for guard in [true, false] {
            let mut cfg = default_config(model, RegularizerKind::None);
            cfg.n_iter = 25;
            cfg.overshoot_guard = guard;
            let (x, trace) = reconstruct(&y, &cfg, None).unwrap();
            assert_eq!(x, x0);
            assert_eq!(trace.records.len(), 26);
            assert!(trace.records.iter().all(|r| r.mse_vs_initial == 0.0));
        }
    }
}

#[test]
fn perturbed_start_returns_to_closed_form() {
    let y = phantom_repeats([16, 16, 16], 200, 0.02, 0.01);
    let field = LikelihoodField::new(&y, AngioModel::Ifv).unwrap();
    let target = field.initial(DEFAULT_FLOOR);
    let tol = 1e-6 * target.mean();
    let step = monotone_step_bound(&field, DEFAULT_FLOOR, 0.5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = AngioVolume::new(target.data().mapv(|v| v * rng.gen_range(0.5..2.0))).unwrap();
    let mut reached = None;
    for k in 1..=10_000 {
        let next = landweber_step_field(&x, &field, step, DEFAULT_FLOOR, false).unwrap();
        // every voxel approaches its maximizer without crossing it
        for ((n, p), t) in next.data().iter().zip(x.data()).zip(target.data()) {
            assert!((n - t).abs() <= (p - t).abs() && (n - t) * (p - t) >= 0.0);
        }
        x = next;
        let err = x
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err < tol {
            reached = Some(k);
            break;
        }
    }
    assert!(reached.is_some(), "no convergence within 10^4 iterations");
}

#[test]
fn default_step_sizes_stay_finite_with_guard() {
    let y = phantom_repeats([24, 24, 24], 3, 0.02, 0.002);
    for model in [AngioModel::Ad, AngioModel::Ifv] {
        for kind in [RegularizerKind::Wavelet, RegularizerKind::TotalVariation] {
            let mut cfg = default_config(model, kind);
            cfg.n_iter = 60;
            let (x, trace) = reconstruct(&y, &cfg, None).unwrap();
            assert!(x
                .data()
                .iter()
                .all(|v| v.is_finite() && *v >= DEFAULT_FLOOR));
            assert!(trace.records.iter().all(|r| r.mse_vs_initial.is_finite()));
        }
    }
}

#[test]
fn guard_prevents_blow_up_at_small_estimates() {
    // Two repeats differing by 1e-3 give x* = 1e-6, far below what the
    // default step size can resolve without overshooting.
    let mut p = SceneParams::new([4, 4, 4], 0);
    p.n_vessels = 0;
    p.background_variance = 2e-6;
    p.vessel_variance = 1.0;
    let y = simulate_repeats(&make_vessel_scene(p).unwrap(), 2, 1).unwrap();
    let field = LikelihoodField::new(&y, AngioModel::Ifv).unwrap();
    let x0 = field.initial(DEFAULT_FLOOR);
    let start = AngioVolume::new(x0.data().mapv(|v| v * 3.0)).unwrap();
    let guarded = landweber_step_field(&start, &field, 3e-6, DEFAULT_FLOOR, true).unwrap();
    for ((g, s), t) in guarded.data().iter().zip(start.data()).zip(x0.data()) {
        assert!(g <= s && g >= t);
    }
    let plain = landweber_step_field(&start, &field, 3e-6, DEFAULT_FLOOR, false).unwrap();
    assert!(plain.data().iter().zip(x0.data()).any(|(p, t)| p < t));
}

#[test]
fn early_stopping_and_trace_metrics() {
    let mut p = SceneParams::new([24, 24, 24], 8);
    p.n_vessels = 4;
    let scene = make_vessel_scene(p).unwrap();
    let y = simulate_repeats(&scene, 5, 2).unwrap();
    let reference = TraceReference::new(scene.x_true.clone(), SlabSpec::full(24), 98.0).unwrap();

    let mut cfg = default_config(AngioModel::Ifv, RegularizerKind::TotalVariation);
    cfg.n_iter = 40;
    let (_, trace) = reconstruct(&y, &cfg, Some(&reference)).unwrap();
    assert_eq!(trace.records.len(), 41);
    assert!(trace.has_metrics());
    assert!(trace
        .records
        .iter()
        .all(|r| r.psnr.unwrap().db().is_finite() && r.ssim.is_some()));
    assert_eq!(trace.stopped_at, None);

    cfg.n_iter = 2000;
    cfg.stop_tol = 1e-2;
    let (_, trace) = reconstruct(&y, &cfg, None).unwrap();
    let k = trace.stopped_at.expect("stopping rule should fire");
    assert!(k < 2000);
    assert_eq!(trace.records.last().unwrap().iteration, k);
}

#[test]
fn invalid_configurations_are_rejected() {
    let y = phantom_repeats([4, 4, 4], 3, 0.02, 0.002);
    let base = default_config(AngioModel::Ifv, RegularizerKind::None);
    let mut bad = vec![base; 5];
    bad[0].n_iter = 0;
    bad[1].n_reg = 0;
    bad[2].step_size = f64::NAN;
    bad[3].floor = 0.0;
    bad[4].regularizer = RegularizerSpec::TotalVariation {
        weight: -1.0,
        inner_iterations: 10,
    };
    for cfg in bad {
        assert!(reconstruct(&y, &cfg, None).is_err(), "{cfg:?}");
    }
}
