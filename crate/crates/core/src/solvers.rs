//! SSGDA, TSGDA-1 and TSGDA-2.
//!
//! All three share the outer step `x <- P_x[x - eta(t) h]`, where `h` is the
//! direct partial `grad_x f` or the implicit hypergradient, evaluated at the
//! new lower iterates on a fresh upper batch. They differ in how `(y, z)`
//! are advanced:
//!
//! * SSGDA: one descent step on `y`, then one ascent step on `z` using the
//!   new `y`, both on the same lower batch, with steps `gamma(t)`.
//! * TSGDA-1: `K` such alternating steps per outer iteration, a fresh lower
//!   batch and steps `gamma(k)` for each.
//! * TSGDA-2: `K` descent steps on `y` with `z` frozen, then `Q` ascent steps
//!   on `z` with `y` frozen at the result, a fresh batch per step.
//!
//! Batch indices come from one stream derived from `spec.seed`, consumed in
//! program order, so two runs with the same seed see the same index sequence
//! and a run with `T` outer steps sees a prefix of the sequence of a longer
//! run.

use std::fmt;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetPair, Sample};
use crate::error::{invalid, BimaxError};
use crate::problems::{project, standard_normal_vec, BmoProblem};
use crate::rng::{derived_rng, Stream, StreamRng};
use crate::schedule::StepSchedule;
use crate::triple::ParamTriple;

/// Coordinates beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Sign of the `z` step: `1.0` ascends on `grad_z g`, `-1.0` descends.
pub const Z_STEP_SIGN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "SSGDA")]
    Ssgda,
    #[serde(rename = "TSGDA1")]
    Tsgda1,
    #[serde(rename = "TSGDA2")]
    Tsgda2,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ssgda => "SSGDA",
            Self::Tsgda1 => "TSGDA1",
            Self::Tsgda2 => "TSGDA2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypergradientMode {
    DirectPartial,
    ExactImplicit,
}

/// How batches are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Uniform indices with replacement, `batch_size_*` per step.
    WithReplacement,
    /// Every step uses the whole set; no randomness is consumed.
    FullBatch,
}

/// Starting point. Both are projected onto the radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Init {
    Zero,
    /// Standard normal entries times `scale`, seeded from the run seed.
    Gaussian { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    pub algorithm: Algorithm,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub eta: StepSchedule,
    pub gamma1: StepSchedule,
    pub gamma2: StepSchedule,
    pub hypergradient_mode: HypergradientMode,
    pub batch_size_upper: usize,
    pub batch_size_lower: usize,
    pub sampling: SamplingMode,
    pub init: Init,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ssgda,
            t: 50,
            k: 1,
            q: 1,
            eta: StepSchedule::Constant { c: 0.05 },
            gamma1: StepSchedule::Constant { c: 0.1 },
            gamma2: StepSchedule::Constant { c: 0.1 },
            hypergradient_mode: HypergradientMode::DirectPartial,
            batch_size_upper: 1,
            batch_size_lower: 1,
            sampling: SamplingMode::WithReplacement,
            init: Init::Zero,
            seed: 0,
            record_every: 1,
        }
    }
}

impl SolverSpec {
    /// Checks the structural invariants. `T = 0` is allowed and returns the
    /// initial point.
    pub fn validate(&self) -> Result<(), BimaxError> {
        for (name, v) in [
            ("K", self.k),
            ("Q", self.q),
            ("batch_size_upper", self.batch_size_upper),
            ("batch_size_lower", self.batch_size_lower),
            ("record_every", self.record_every),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be >= 1"));
            }
        }
        match self.algorithm {
            Algorithm::Ssgda if self.k != 1 || self.q != 1 => {
                Err(invalid("K", "SSGDA requires K = Q = 1"))
            }
            Algorithm::Tsgda1 if self.q != 1 => Err(invalid("Q", "TSGDA1 requires Q = 1")),
            _ => {
                if let Init::Gaussian { scale } = self.init {
                    if !(scale.is_finite() && scale >= 0.0) {
                        return Err(invalid("init.scale", "must be finite and >= 0"));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Output of one solver run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub final_iterate: ParamTriple,
    /// `(t, w^t)` for `t = 0, r, 2r, ... <= T`, with `r = record_every`.
    pub snapshots: Vec<(usize, ParamTriple)>,
    /// Mean validation upper loss at `w^{t+1}`, one entry per completed
    /// outer iteration.
    pub upper_loss: Vec<f64>,
    pub spec: SolverSpec,
    /// Seconds.
    pub wall_time: f64,
}

impl RunRecord {
    /// Bitwise equality of everything except the wall time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.final_iterate.bitwise_eq(&other.final_iterate)
            && self.snapshots.len() == other.snapshots.len()
            && self
                .snapshots
                .iter()
                .zip(&other.snapshots)
                .all(|((t, a), (s, b))| t == s && a.bitwise_eq(b))
            && self.upper_loss.len() == other.upper_loss.len()
            && self
                .upper_loss
                .iter()
                .zip(&other.upper_loss)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone)]
pub enum SolverError {
    Invalid(BimaxError),
    /// An iterate became non-finite or exceeded [`DIVERGENCE_LIMIT`] during
    /// outer iteration `t`. `partial` holds the trajectory up to `w^t`.
    Diverged { t: usize, partial: Box<RunRecord> },
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Invalid(e) => write!(f, "{e}"),
            Self::Diverged { t, .. } => write!(f, "iterates diverged at outer iteration t={t}"),
        }
    }
}

impl std::error::Error for SolverError {}

impl From<BimaxError> for SolverError {
    fn from(e: BimaxError) -> Self {
        Self::Invalid(e)
    }
}

/// Runs `spec.algorithm` from the initialization declared in `spec`.
pub fn run<P: BmoProblem + ?Sized>(p: &P, data: &DatasetPair, spec: &SolverSpec) -> Result<RunRecord, SolverError> {
    let w0 = initial_point(p, spec)?;
    run_with_init(p, data, spec, w0)
}

pub fn run_ssgda<P: BmoProblem + ?Sized>(p: &P, data: &DatasetPair, spec: &SolverSpec) -> Result<RunRecord, SolverError> {
    expect(spec, Algorithm::Ssgda)?;
    run(p, data, spec)
}

pub fn run_tsgda1<P: BmoProblem + ?Sized>(p: &P, data: &DatasetPair, spec: &SolverSpec) -> Result<RunRecord, SolverError> {
    expect(spec, Algorithm::Tsgda1)?;
    run(p, data, spec)
}

pub fn run_tsgda2<P: BmoProblem + ?Sized>(p: &P, data: &DatasetPair, spec: &SolverSpec) -> Result<RunRecord, SolverError> {
    expect(spec, Algorithm::Tsgda2)?;
    run(p, data, spec)
}

fn expect(spec: &SolverSpec, a: Algorithm) -> Result<(), SolverError> {
    if spec.algorithm != a {
        return Err(invalid("algorithm", format!("expected {a}, got {}", spec.algorithm)).into());
    }
    Ok(())
}

/// The initialization `run` would use.
pub fn initial_point<P: BmoProblem + ?Sized>(p: &P, spec: &SolverSpec) -> Result<ParamTriple, BimaxError> {
    spec.validate()?;
    let dims = p.dims();
    let w = match spec.init {
        Init::Zero => ParamTriple::zeros(dims),
        Init::Gaussian { scale } => {
            let mut rng = derived_rng(spec.seed, Stream::Init, &[]);
            let v = standard_normal_vec(&mut rng, dims.total()) * scale;
            ParamTriple::from_stacked(&v, dims)
        }
    };
    Ok(project(p.radii(), &w))
}

/// Runs `spec.algorithm` from an explicit starting point.
pub fn run_with_init<P: BmoProblem + ?Sized>(
    p: &P,
    data: &DatasetPair,
    spec: &SolverSpec,
    w0: ParamTriple,
) -> Result<RunRecord, SolverError> {
    spec.validate()?;
    if w0.dims() != p.dims() {
        return Err(invalid("init", "starting point has the wrong dimensions").into());
    }
    let analytic = match spec.hypergradient_mode {
        HypergradientMode::DirectPartial => None,
        HypergradientMode::ExactImplicit => Some(p.analytic().ok_or_else(|| {
            invalid(
                "hypergradient_mode",
                format!("exact_implicit needs an analytic problem, `{}` is not", p.name()),
            )
        })?),
    };
    let start = Instant::now();
    let mut st = State {
        p,
        data,
        spec,
        rng: derived_rng(spec.seed, Stream::Indices, &[]),
        w: w0,
    };
    let mut snapshots = vec![(0, st.w.clone())];
    let mut upper_loss = Vec::with_capacity(spec.t);
    let radii = p.radii();

    for t in 0..spec.t {
        let prev = st.w.clone();
        match spec.algorithm {
            Algorithm::Ssgda => st.alternating_step(spec.gamma1.at(t), spec.gamma2.at(t)),
            Algorithm::Tsgda1 => {
                for k in 0..spec.k {
                    st.alternating_step(spec.gamma1.at(k), spec.gamma2.at(k));
                }
            }
            Algorithm::Tsgda2 => {
                for k in 0..spec.k {
                    let b = st.lower_batch();
                    let g = mean_lower(p, &st.w, &b);
                    st.w.y -= g.y * spec.gamma1.at(k);
                    st.w = project(radii, &st.w);
                }
                for q in 0..spec.q {
                    let b = st.lower_batch();
                    let g = mean_lower(p, &st.w, &b);
                    st.w.z += g.z * (Z_STEP_SIGN * spec.gamma2.at(q));
                    st.w = project(radii, &st.w);
                }
            }
        }
        let ub = st.upper_batch();
        let mut h = DVector::zeros(st.w.x.len());
        for xi in &ub {
            h += match analytic {
                Some(a) => a.implicit_hypergradient(&st.w, xi),
                None => p.upper_grad(&st.w, xi).x,
            };
        }
        h /= ub.len() as f64;
        st.w.x -= h * spec.eta.at(t);
        st.w = project(radii, &st.w);

        if !st.w.is_finite() || st.w.max_abs() > DIVERGENCE_LIMIT {
            let partial = RunRecord {
                final_iterate: prev,
                snapshots,
                upper_loss,
                spec: spec.clone(),
                wall_time: start.elapsed().as_secs_f64(),
            };
            return Err(SolverError::Diverged {
                t,
                partial: Box::new(partial),
            });
        }
        upper_loss.push(mean_upper_loss(p, &st.w, &data.validation));
        if (t + 1) % spec.record_every == 0 {
            snapshots.push((t + 1, st.w.clone()));
        }
    }
    Ok(RunRecord {
        final_iterate: st.w,
        snapshots,
        upper_loss,
        spec: spec.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Mean of `f` over `set` at `w`.
pub fn mean_upper_loss<P: BmoProblem + ?Sized>(p: &P, w: &ParamTriple, set: &[Sample]) -> f64 {
    set.iter().map(|xi| p.upper_loss(w, xi)).sum::<f64>() / set.len() as f64
}

fn mean_lower<P: BmoProblem + ?Sized>(p: &P, w: &ParamTriple, batch: &[&Sample]) -> ParamTriple {
    let mut acc = ParamTriple::zeros(w.dims());
    for s in batch {
        let g = p.lower_grad(w, s);
        acc.y += g.y;
        acc.z += g.z;
    }
    let n = batch.len() as f64;
    acc.y /= n;
    acc.z /= n;
    acc
}

struct State<'a, P: ?Sized> {
    p: &'a P,
    data: &'a DatasetPair,
    spec: &'a SolverSpec,
    rng: StreamRng,
    w: ParamTriple,
}

impl<'a, P: BmoProblem + ?Sized> State<'a, P> {
    fn batch(rng: &mut StreamRng, set: &'a [Sample], size: usize, mode: SamplingMode) -> Vec<&'a Sample> {
        match mode {
            SamplingMode::FullBatch => set.iter().collect(),
            SamplingMode::WithReplacement => (0..size).map(|_| &set[rng.random_range(0..set.len())]).collect(),
        }
    }

    fn lower_batch(&mut self) -> Vec<&'a Sample> {
        let data = self.data;
        Self::batch(&mut self.rng, &data.training, self.spec.batch_size_lower, self.spec.sampling)
    }

    fn upper_batch(&mut self) -> Vec<&'a Sample> {
        let data = self.data;
        Self::batch(&mut self.rng, &data.validation, self.spec.batch_size_upper, self.spec.sampling)
    }

    /// Descent on `y`, then ascent on `z` at the new `y`, on one batch.
    fn alternating_step(&mut self, g1: f64, g2: f64) {
        let data = self.data;
        let b = Self::batch(&mut self.rng, &data.training, self.spec.batch_size_lower, self.spec.sampling);
        let radii = self.p.radii();
        let gy = mean_lower(self.p, &self.w, &b).y;
        self.w.y -= gy * g1;
        self.w = project(radii, &self.w);
        let gz = mean_lower(self.p, &self.w, &b).z;
        self.w.z += gz * (Z_STEP_SIGN * g2);
        self.w = project(radii, &self.w);
    }
}
