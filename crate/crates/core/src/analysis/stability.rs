//! On-average argument stability by sibling reruns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean_stderr;
use crate::data::DatasetPair;
use crate::error::{invalid, BimaxError, Result};
use crate::problems::BmoProblem;
use crate::rng::{derive, derived_rng, Stream};
use crate::solvers::{run, SolverError, SolverSpec};
use crate::triple::triple_distance;

/// Whether a sibling run reuses the original run's index stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Coupled,
    Uncoupled,
}

/// How the replaced validation sample is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    /// An independent draw from the validation distribution.
    Fresh,
    /// The original sample itself (a zero-distance smoke test).
    Identical,
}

/// Which validation positions get a sibling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSelection {
    /// `min(m1, n)` positions drawn uniformly without replacement per
    /// replicate.
    Subsample(usize),
    /// Every position.
    Full,
    /// The listed positions, identical in every replicate.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub m1: usize,
    pub m2: usize,
    pub indices: IndexSelection,
    pub replicates: usize,
    pub coupling: Coupling,
    pub replacement: Replacement,
    pub seed: u64,
}

impl StabilityConfig {
    pub fn new(m1: usize, m2: usize, replicates: usize, seed: u64) -> Self {
        Self {
            m1,
            m2,
            indices: IndexSelection::Subsample(25),
            replicates,
            coupling: Coupling::Coupled,
            replacement: Replacement::Fresh,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    /// Mean over replicates of the per-replicate mean distance.
    pub beta_l1: f64,
    pub beta_l1_stderr: f64,
    /// Same with squared distances.
    pub beta_l2_sq: f64,
    pub beta_l2_sq_stderr: f64,
    /// `(replicate, index, distance)` for every successful sibling run.
    pub per_index: Vec<(usize, usize, f64)>,
    /// Successful replicates.
    pub replicates: usize,
    /// Replicates dropped because some run diverged.
    pub failures: usize,
    pub coupling: Coupling,
    /// Sibling positions per replicate.
    pub indices_used: usize,
}

fn select_indices(cfg: &StabilityConfig, r: usize) -> Vec<usize> {
    match &cfg.indices {
        IndexSelection::Full => (0..cfg.m1).collect(),
        IndexSelection::Explicit(v) => v.clone(),
        IndexSelection::Subsample(n) => {
            let mut rng = derived_rng(cfg.seed, Stream::Subset, &[r as u64]);
            let mut v = rand::seq::index::sample(&mut rng, cfg.m1, (*n).min(cfg.m1)).into_vec();
            v.sort_unstable();
            v
        }
    }
}

/// Per-replicate outcome: `Ok(distances)` or `Err(())` after a divergence.
fn replicate<P: BmoProblem + ?Sized>(
    p: &P,
    spec: &SolverSpec,
    cfg: &StabilityConfig,
    r: usize,
) -> std::result::Result<Vec<(usize, f64)>, SolverError> {
    let rs = r as u64;
    let data = DatasetPair::generate(p, cfg.m1, cfg.m2, 1, derive(cfg.seed, Stream::Data, &[rs]))?;
    let mut base_spec = spec.clone();
    base_spec.seed = derive(cfg.seed, Stream::Indices, &[rs]);
    let base = run(p, &data, &base_spec)?;
    select_indices(cfg, r)
        .into_par_iter()
        .map(|i| {
            let sib = match cfg.replacement {
                Replacement::Fresh => {
                    data.make_sibling(i, derive(cfg.seed, Stream::Sibling, &[rs, i as u64]), p)?
                }
                Replacement::Identical => data.with_replacement(i, data.validation[i].clone())?,
            };
            let mut s = base_spec.clone();
            if cfg.coupling == Coupling::Uncoupled {
                s.seed = derive(cfg.seed, Stream::Uncoupled, &[rs, i as u64]);
            }
            let other = run(p, &sib, &s)?;
            let d = triple_distance(&base.final_iterate, &other.final_iterate)?;
            Ok((i, d))
        })
        .collect()
}

/// Monte-Carlo estimate of the on-average argument stability of `spec`.
///
/// Replicate `r` draws its dataset from `derive(seed, Data, [r])` and runs
/// with index seed `derive(seed, Indices, [r])`. The sibling at position
/// `i` draws its replacement from `derive(seed, Sibling, [r, i])`; uncoupled
/// sibling runs use `derive(seed, Uncoupled, [r, i])` as their index seed.
pub fn estimate_stability<P: BmoProblem + ?Sized>(
    p: &P,
    spec: &SolverSpec,
    cfg: &StabilityConfig,
) -> Result<StabilityEstimate> {
    if cfg.replicates == 0 {
        return Err(invalid("replicates", "must be >= 1"));
    }
    spec.validate()?;
    let indices_used = match &cfg.indices {
        IndexSelection::Explicit(v) => {
            if v.is_empty() {
                return Err(invalid("stability.indices", "must name at least one index"));
            }
            if let Some(&bad) = v.iter().find(|&&i| i >= cfg.m1) {
                return Err(BimaxError::IndexOutOfRange { index: bad, len: cfg.m1 });
            }
            v.len()
        }
        IndexSelection::Subsample(0) => {
            return Err(invalid("stability.index_subsample", "must be >= 1"));
        }
        IndexSelection::Subsample(n) => (*n).min(cfg.m1),
        IndexSelection::Full => cfg.m1,
    };

    let outcomes: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| replicate(p, spec, cfg, r))
        .collect();

    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut per_index = Vec::new();
    let mut failures = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(ds) => {
                let n = ds.len() as f64;
                l1.push(ds.iter().map(|(_, d)| d).sum::<f64>() / n);
                l2.push(ds.iter().map(|(_, d)| d * d).sum::<f64>() / n);
                per_index.extend(ds.into_iter().map(|(i, d)| (r, i, d)));
            }
            Err(SolverError::Diverged { .. }) => failures += 1,
            Err(SolverError::Invalid(e)) => return Err(e),
        }
    }
    let (beta_l1, beta_l1_stderr) = mean_stderr(&l1);
    let (beta_l2_sq, beta_l2_sq_stderr) = mean_stderr(&l2);
    Ok(StabilityEstimate {
        beta_l1,
        beta_l1_stderr,
        beta_l2_sq,
        beta_l2_sq_stderr,
        per_index,
        replicates: l1.len(),
        failures,
        coupling: cfg.coupling,
        indices_used,
    })
}
