//! Order statistics shared by normalization, projection and thresholding.

/// Fractional rank of percentile `q` (0–100) among `n` sorted samples.
/// Positions within 1e-9 of an integer snap to it so that e.g. the 99.9th
/// percentile of 1001 samples lands exactly on index 999.
fn rank(q: f64, n: usize) -> f64 {
    let pos = (q / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let nearest = pos.round();
    if (pos - nearest).abs() < 1e-9 {
        nearest
    } else {
        pos
    }
}

/// Percentile of already-sorted data with linear interpolation between
/// the two bracketing order statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = rank(q, sorted.len());
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Linear-interpolated percentile of unsorted data.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

/// Percentile that always returns an observed sample: the order statistic
/// at or above the fractional rank.
pub fn percentile_higher(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    sorted[rank(q, sorted.len()).ceil() as usize]
}

/// Arithmetic mean with Neumaier-compensated summation, so the mean of `n`
/// copies of `v` is `v` itself. Empty input gives 0.
pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut n = 0usize;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum + comp) / n as f64
    }
}
