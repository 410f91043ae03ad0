//! Stability, generalization gap and error decomposition estimates, plus
//! closed-form rate shapes.
//!
//! Replicates and sibling reruns run on the rayon pool. Results are
//! collected in index order and reduced sequentially, so output does not
//! depend on the number of workers.

mod bounds;
mod gap;
mod stability;

pub use bounds::{eta_prime, rate_bound, theorem1_convert, RateQuery, RateValue, Theorem1Variant};
pub use gap::{measure_gap, GapConfig, GapReport, ReplicateGap};
pub use stability::{
    estimate_stability, Coupling, IndexSelection, Replacement, StabilityConfig, StabilityEstimate,
};

/// Mean and standard error (`sd / sqrt(n)`, zero for `n < 2`).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_stderr_small_cases() {
        assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert!(mean_stderr(&[]).0.is_nan());
    }
}
