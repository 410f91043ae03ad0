//! Generalization gap, optimization error and excess risk.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean_stderr;
use crate::data::DatasetPair;
use crate::error::{invalid, Result};
use crate::problems::BmoProblem;
use crate::rng::{derive, Stream};
use crate::solvers::{mean_upper_loss, run, SolverError, SolverSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub m1: usize,
    pub m2: usize,
    pub m_test: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl GapConfig {
    /// `m_test = 10 m1`.
    pub fn new(m1: usize, m2: usize, replicates: usize, seed: u64) -> Self {
        Self {
            m1,
            m2,
            m_test: 10 * m1,
            replicates,
            seed,
        }
    }
}

/// Measurements from one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateGap {
    pub replicate: usize,
    pub empirical_risk: f64,
    pub population_risk_est: f64,
    pub optimization_error: Option<f64>,
    pub excess_risk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub empirical_risk: f64,
    pub empirical_risk_stderr: f64,
    pub population_risk_est: f64,
    pub population_risk_stderr: f64,
    /// `population_risk_est - empirical_risk`.
    pub gap: f64,
    /// Standard error of the paired per-replicate gaps.
    pub gap_stderr: f64,
    pub optimization_error: Option<f64>,
    pub optimization_error_stderr: Option<f64>,
    pub excess_risk: Option<f64>,
    pub excess_risk_stderr: Option<f64>,
    /// Successful replicates.
    pub replicates: usize,
    pub failures: usize,
    pub per_replicate: Vec<ReplicateGap>,
}

fn replicate<P: BmoProblem + ?Sized>(
    p: &P,
    spec: &SolverSpec,
    cfg: &GapConfig,
    r: usize,
) -> std::result::Result<ReplicateGap, SolverError> {
    let rs = r as u64;
    let data = DatasetPair::generate(p, cfg.m1, cfg.m2, cfg.m_test, derive(cfg.seed, Stream::Data, &[rs]))?;
    let mut s = spec.clone();
    s.seed = derive(cfg.seed, Stream::Indices, &[rs]);
    let w = run(p, &data, &s)?.final_iterate;
    let empirical_risk = mean_upper_loss(p, &w, &data.validation);
    let population_risk_est = mean_upper_loss(p, &w, &data.test);
    let (mut optimization_error, mut excess_risk) = (None, None);
    if let Some(a) = p.analytic() {
        let x_hat = a.empirical_minimizer(&data.training, &data.validation)?;
        let here = a.upper_objective(&w.x, &data.training, &data.validation)?.0;
        let best = a.upper_objective(&x_hat, &data.training, &data.validation)?.0;
        optimization_error = Some(here - best);
        let x_star = a.population_minimizer(&data.training)?;
        excess_risk = Some(a.population_objective(&w.x, &data.training)? - a.population_objective(&x_star, &data.training)?);
    }
    Ok(ReplicateGap {
        replicate: r,
        empirical_risk,
        population_risk_est,
        optimization_error,
        excess_risk,
    })
}

/// Trains on `replicates` independent datasets and compares validation and
/// test risk at the output. Replicate `r` uses dataset seed
/// `derive(seed, Data, [r])` and index seed `derive(seed, Indices, [r])`.
///
/// On problems with closed-form oracles the optimization error and excess
/// risk are reported for the upper objective with the lower level solved
/// exactly: `Phi_D(x_T) - min Phi_D` with `Phi_D` the validation mean, and
/// the same for the population objective.
pub fn measure_gap<P: BmoProblem + ?Sized>(p: &P, spec: &SolverSpec, cfg: &GapConfig) -> Result<GapReport> {
    if cfg.replicates == 0 {
        return Err(invalid("replicates", "must be >= 1"));
    }
    spec.validate()?;
    let outcomes: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| replicate(p, spec, cfg, r))
        .collect();
    let mut per_replicate = Vec::new();
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(g) => per_replicate.push(g),
            Err(SolverError::Diverged { .. }) => failures += 1,
            Err(SolverError::Invalid(e)) => return Err(e),
        }
    }
    let col = |f: &dyn Fn(&ReplicateGap) -> f64| per_replicate.iter().map(f).collect::<Vec<f64>>();
    let (empirical_risk, empirical_risk_stderr) = mean_stderr(&col(&|g| g.empirical_risk));
    let (population_risk_est, population_risk_stderr) = mean_stderr(&col(&|g| g.population_risk_est));
    let (_, gap_stderr) = mean_stderr(&col(&|g| g.population_risk_est - g.empirical_risk));
    let opt: Option<Vec<f64>> = per_replicate.iter().map(|g| g.optimization_error).collect();
    let exc: Option<Vec<f64>> = per_replicate.iter().map(|g| g.excess_risk).collect();
    let opt = opt.filter(|v| !v.is_empty()).map(|v| mean_stderr(&v));
    let exc = exc.filter(|v| !v.is_empty()).map(|v| mean_stderr(&v));
    Ok(GapReport {
        empirical_risk,
        empirical_risk_stderr,
        population_risk_est,
        population_risk_stderr,
        gap: population_risk_est - empirical_risk,
        gap_stderr,
        optimization_error: opt.map(|o| o.0),
        optimization_error_stderr: opt.map(|o| o.1),
        excess_risk: exc.map(|e| e.0),
        excess_risk_stderr: exc.map(|e| e.1),
        replicates: per_replicate.len(),
        failures,
        per_replicate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{QuadraticBmo, QuadraticConfig, QuadraticMatrices};
    use crate::solvers::{Algorithm, Init};
    use crate::StepSchedule;

    fn zero_problem() -> QuadraticBmo {
        let z = |r: usize, c: usize| vec![vec![0.0; c]; r];
        let id = |n: usize| (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        QuadraticBmo::new(&QuadraticConfig {
            dx: 2,
            dy: 2,
            dz: 2,
            lambda: 0.0,
            sigma_xi: 0.0,
            sigma_zeta: 0.0,
            matrices: Some(QuadraticMatrices {
                a: id(2),
                b: id(2),
                c: z(2, 2),
                p: z(2, 2),
                q: z(2, 2),
                m: z(2, 2),
                xi_mean: vec![0.0; 2],
                zeta_mean: vec![0.0; 4],
            }),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_objective_has_zero_gap_and_error() {
        let p = zero_problem();
        let s = SolverSpec {
            t: 10,
            init: Init::Gaussian { scale: 0.0 },
            ..Default::default()
        };
        let g = measure_gap(&p, &s, &GapConfig::new(5, 5, 3, 0)).unwrap();
        assert_eq!(g.gap, 0.0);
        assert_eq!(g.optimization_error, Some(0.0));
        assert_eq!(g.excess_risk, Some(0.0));
    }

    #[test]
    fn gap_is_exact_difference_and_errors_nonnegative() {
        let p = QuadraticBmo::new(&QuadraticConfig::default()).unwrap();
        let s = SolverSpec {
            algorithm: Algorithm::Ssgda,
            t: 30,
            eta: StepSchedule::constant(0.05).unwrap(),
            ..Default::default()
        };
        let g = measure_gap(&p, &s, &GapConfig::new(20, 20, 4, 7)).unwrap();
        assert_eq!(g.gap.to_bits(), (g.population_risk_est - g.empirical_risk).to_bits());
        assert_eq!(g.replicates, 4);
        for r in &g.per_replicate {
            assert!(r.optimization_error.unwrap() >= -1e-9);
            assert!(r.excess_risk.unwrap() >= -1e-9);
        }
    }
}
