//! Counting statistics.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Binomial proportion with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Proportion {
    pub successes: usize,
    pub trials: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Proportion {
    pub fn new(successes: usize, trials: usize) -> Self {
        let (lower, upper) = wilson(successes, trials, Z95);
        let estimate = if trials > 0 {
            successes as f64 / trials as f64
        } else {
            0.0
        };
        Self {
            successes,
            trials,
            estimate,
            lower,
            upper,
        }
    }

    /// Whether the two 95% intervals overlap.
    pub fn overlaps(&self, other: &Proportion) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }

    /// Binomial standard error at the point estimate.
    pub fn std_error(&self) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }
}

/// Poisson rate in ms⁻¹ from a count over an exposure in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    pub count: usize,
    pub exposure_us: f64,
    pub per_ms: f64,
    pub error_per_ms: f64,
}

impl Rate {
    pub fn new(count: usize, exposure_us: f64) -> Self {
        let exposure_ms = exposure_us * 1e-3;
        Self {
            count,
            exposure_us,
            per_ms: count as f64 / exposure_ms,
            error_per_ms: (count as f64).sqrt() / exposure_ms,
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Equal-width histogram over `[lo, hi)`; returns bin centres and counts.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, usize)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v < hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (lo + (b as f64 + 0.5) * width, c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference_values() {
        // 8 of 10 at 95%: (0.4902, 0.9433).
        let (lo, hi) = wilson(8, 10, Z95);
        assert!((lo - 0.4902).abs() < 1e-4 && (hi - 0.9433).abs() < 1e-4);
        let (lo, hi) = wilson(0, 20, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.1611).abs() < 1e-4);
        let (lo, hi) = wilson(20, 20, Z95);
        assert!((lo - 0.8389).abs() < 1e-4);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn wilson_interval_covers_truth_at_nominal_rate() {
        use crate::trajectory::NoiseSource;
        let mut noise = NoiseSource::new(17, 0);
        let (p, n, reps) = (0.9, 200, 4000);
        let mut covered = 0;
        for _ in 0..reps {
            let k = (0..n).filter(|_| noise.uniform() < p).count();
            let (lo, hi) = wilson(k, n, Z95);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((rate - 0.95).abs() < 0.015, "{rate}");
    }

    #[test]
    fn rate_units() {
        let r = Rate::new(4, 2000.0);
        assert!((r.per_ms - 2.0).abs() < 1e-12);
        assert!((r.error_per_ms - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_and_histogram() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        let h = histogram(&[0.1, 0.2, 0.9, 1.5], 0.0, 1.0, 2);
        assert_eq!(h, vec![(0.25, 2), (0.75, 1)]);
    }
}
