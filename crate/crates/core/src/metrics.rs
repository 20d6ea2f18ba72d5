//! Error and cost summaries over replicate runs.

use alloc::vec::Vec;

use crate::driver::RunResult;

/// Mean relative squared error `(1/R) sum_r (p_r - p*)^2 / p*^2`.
pub fn expected_error(estimates: &[f64], p_star: f64) -> f64 {
    if estimates.is_empty() {
        return f64::NAN;
    }
    estimates
        .iter()
        .map(|p| {
            let r = (p - p_star) / p_star;
            r * r
        })
        .sum::<f64>()
        / estimates.len() as f64
}

/// `k + (1/R) sum_r gain * (reduced evaluations of run r up to iteration k)`,
/// in units of one true-score evaluation.
pub fn expected_cost(runs: &[RunResult], k: usize, gain: f64) -> f64 {
    expected_cost_from_counts(
        &runs
            .iter()
            .map(|r| r.reduced_evals_at(k))
            .collect::<Vec<_>>(),
        k,
        gain,
    )
}

/// Same as [`expected_cost`] from cumulative counts per run.
pub fn expected_cost_from_counts(cumulative_evals: &[u64], k: usize, gain: f64) -> f64 {
    if cumulative_evals.is_empty() {
        return k as f64;
    }
    let mean =
        cumulative_evals.iter().map(|&c| c as f64).sum::<f64>() / cumulative_evals.len() as f64;
    k as f64 + gain * mean
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_examples() {
        assert_eq!(expected_error(&[0.3, 0.3], 0.3), 0.0);
        assert_eq!(expected_error(&[0.6], 0.3), 1.0);
        assert!((expected_error(&[0.0, 0.6], 0.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cost_examples() {
        assert_eq!(expected_cost_from_counts(&[123, 456], 10, 0.0), 10.0);
        assert!((expected_cost_from_counts(&[200], 2, 0.04) - 10.0).abs() < 1e-12);
        assert_eq!(expected_cost_from_counts(&[5000], 1, 1.0), 5001.0);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(median(&v), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }
}
