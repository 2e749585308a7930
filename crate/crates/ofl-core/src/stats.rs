//! Small aggregation helpers shared by the Monte Carlo operations and the
//! experiment runner.

/// Sample mean and standard error of the mean. Empty input yields (0, 0);
/// a single observation has stderr 0.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Empirical quantile by the nearest-rank rule on a copy of the data.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    assert!((0.0..=1.0).contains(&q));
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Harmonic number H_n = sum_{i=1..n} 1/i.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_stderr_basics() {
        let (m, s) = mean_stderr(&[2.0, 4.0, 6.0]);
        assert_eq!(m, 4.0);
        // sample variance 4, stderr = sqrt(4/3)
        assert!((s - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_stderr(&[5.0]), (5.0, 0.0));
    }

    #[test]
    fn quantile_nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.95), 5.0);
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.0), 1.0);
    }

    #[test]
    fn harmonic_reference_values() {
        assert!((harmonic(2) - 1.5).abs() < 1e-15);
        assert!((harmonic(100) - 5.187377517639621).abs() < 1e-12);
    }
}
