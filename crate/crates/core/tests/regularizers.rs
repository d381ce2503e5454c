use ndarray::Array3;
use octa_core::regularizers::{
    haar_dwt_3d, haar_idwt_3d, total_variation, tv_denoise, wavelet_shrinkage_with, ThresholdMode,
};
use octa_core::AngioVolume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(rng: &mut ChaCha8Rng, shape: [usize; 3], lo: f64, hi: f64) -> AngioVolume {
    AngioVolume::new(Array3::from_shape_simple_fn(
        (shape[0], shape[1], shape[2]),
        || rng.gen_range(lo..hi),
    ))
    .unwrap()
}

fn max_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn haar_round_trip_on_odd_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for shape in [[16, 16, 16], [17, 9, 12], [8, 5, 31]] {
        let x = random_volume(&mut rng, shape, 0.0, 1.0);
        for levels in 1..=2 {
            let back = haar_idwt_3d(&haar_dwt_3d(&x, levels).unwrap());
            assert!(
                max_abs_diff(&back, x.data()) < 1e-10,
                "{shape:?} L={levels}"
            );
        }
        let zero = wavelet_shrinkage_with(&x, 0.0, 2, ThresholdMode::Hard, 1e-8).unwrap();
        assert!(max_abs_diff(zero.data(), x.data()) < 1e-10);
    }
}

#[test]
fn shrinkage_with_huge_threshold_keeps_block_means() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_volume(&mut rng, [8, 8, 8], 0.0, 1.0);
    let out = wavelet_shrinkage_with(&x, 1e9, 3, ThresholdMode::Soft, 1e-8).unwrap();
    let mean = x.mean();
    assert!(out.data().iter().all(|v| (v - mean).abs() < 1e-12));
}

#[test]
fn tv_is_exact_on_constants() {
    for v in [1e-6, 0.02, 3.5] {
        let c = AngioVolume::filled([7, 5, 9], v).unwrap();
        assert_eq!(tv_denoise(&c, 1e-4, 10).unwrap(), c);
        assert_eq!(tv_denoise(&c, 10.0, 50).unwrap(), c);
    }
}

#[test]
fn tv_reduces_variation_and_keeps_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..40 {
        let x = random_volume(&mut rng, [16, 16, 16], 0.1, 1.0);
        let weight = [1e-4, 1e-2, 0.1, 1.0][i % 4];
        let out = tv_denoise(&x, weight, 10).unwrap();
        assert!(total_variation(out.data()) <= total_variation(x.data()));
        assert!((out.mean() - x.mean()).abs() < 1e-6 * 0.9);
    }
}

#[test]
fn tv_rejects_bad_weight() {
    let c = AngioVolume::filled([2, 2, 2], 1.0).unwrap();
    assert!(tv_denoise(&c, 0.0, 10).is_err());
    assert!(tv_denoise(&c, f64::NAN, 10).is_err());
}
