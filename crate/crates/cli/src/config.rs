//! Experiment configuration: JSON parsing, presets and per-cell expansion.

use bimax_core::analysis::{Coupling, IndexSelection, Replacement};
use bimax_core::{
    Algorithm, BmoProblem, QuadraticBmo, QuadraticConfig, ReweightBmo, ReweightConfig, SolverSpec, StepSchedule,
};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use crate::CliError;

/// Names accepted by `--preset` and the top-level `preset` field.
pub const PRESETS: &[&str] = &["paper-default", "desk"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset applied before parsing, if any.
    #[serde(default)]
    pub preset: Option<String>,
    /// Root seed for datasets, index streams and siblings.
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverSpec,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ProblemConfig {
    Quadratic(QuadraticConfig),
    Reweight(ReweightConfig),
}

/// A constructed problem instance.
#[allow(clippy::large_enum_variant)]
pub enum Problem {
    Quadratic(QuadraticBmo),
    Reweight(ReweightBmo),
}

impl Problem {
    pub fn as_dyn(&self) -> &(dyn BmoProblem + Sync) {
        match self {
            Problem::Quadratic(p) => p,
            Problem::Reweight(p) => p,
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem, CliError> {
        let wrap = |e: bimax_core::BimaxError| CliError::Config(format!("problem: {e}"));
        Ok(match self {
            ProblemConfig::Quadratic(c) => Problem::Quadratic(QuadraticBmo::new(c).map_err(wrap)?),
            ProblemConfig::Reweight(c) => Problem::Reweight(ReweightBmo::new(c).map_err(wrap)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Sweep,
    Gap,
    Stability,
    Bounds,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Sweep => "sweep",
            Mode::Gap => "gap",
            Mode::Stability => "stability",
            Mode::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    /// Swept outer iteration counts; empty means `solver.T`.
    #[serde(rename = "T", default)]
    pub t: Vec<usize>,
    #[serde(rename = "K", default)]
    pub k: Vec<usize>,
    #[serde(rename = "Q", default)]
    pub q: Vec<usize>,
    #[serde(default = "default_m1")]
    pub m1: Vec<usize>,
    /// Swept upper step schedules; empty means `solver.eta`.
    #[serde(default)]
    pub eta: Vec<StepSchedule>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_m2")]
    pub m2: usize,
    /// Test-set size; `10 m1` when absent.
    #[serde(default)]
    pub m_test: Option<usize>,
    #[serde(default)]
    pub stability: StabilitySection,
    #[serde(default)]
    pub bounds: BoundsSection,
    /// Artifact file name inside the output directory.
    #[serde(default)]
    pub output: Option<String>,
}

fn default_m1() -> Vec<usize> {
    vec![200]
}

fn default_m2() -> usize {
    200
}

fn default_replicates() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    /// Explicit sibling positions. Takes precedence over the other two.
    pub indices: Option<Vec<usize>>,
    pub index_subsample: usize,
    /// Use every position.
    pub full_sum: bool,
    pub coupling: Coupling,
    pub replacement: Replacement,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            indices: None,
            index_subsample: 25,
            full_sum: false,
            coupling: Coupling::Coupled,
            replacement: Replacement::Fresh,
        }
    }
}

impl StabilitySection {
    pub fn selection(&self) -> IndexSelection {
        match (&self.indices, self.full_sum) {
            (Some(v), _) => IndexSelection::Explicit(v.clone()),
            (None, true) => IndexSelection::Full,
            (None, false) => IndexSelection::Subsample(self.index_subsample),
        }
    }
}

/// Which rate expression a bounds row evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Generalization,
    Optimization,
    Excess,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Generalization => "generalization",
            Quantity::Optimization => "optimization",
            Quantity::Excess => "excess",
        }
    }
}

/// A real number written either as a JSON number or as a `"p/q"` string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio(pub f64);

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Ratio(v)),
            Raw::Text(s) => {
                let parse = |t: &str| t.trim().parse::<f64>().map_err(serde::de::Error::custom);
                match s.split_once('/') {
                    Some((a, b)) => Ok(Ratio(parse(a)? / parse(b)?)),
                    None => Ok(Ratio(parse(&s)?)),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub algorithms: Vec<Algorithm>,
    pub quantities: Vec<Quantity>,
    pub c1: Vec<Ratio>,
    pub c2: Vec<Ratio>,
    pub c3: Vec<Ratio>,
    pub c5: Vec<Ratio>,
    pub c6: Vec<Ratio>,
    pub c7: Vec<Ratio>,
    /// Bound on `E|x0 - x_hat|` for the optimization rate; `2 R_x` when absent.
    #[serde(rename = "V")]
    pub v: Option<f64>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Ssgda],
            quantities: vec![Quantity::Generalization],
            c1: vec![Ratio(0.05)],
            c2: vec![Ratio(0.5)],
            c3: vec![Ratio(0.5)],
            c5: vec![Ratio(0.5)],
            c6: vec![Ratio(0.5)],
            c7: vec![Ratio(0.5)],
            v: None,
        }
    }
}

/// One point of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub spec: SolverSpec,
    pub m1: usize,
}

impl ExperimentConfig {
    fn list<T: Clone>(v: &[T], base: T) -> Vec<T> {
        if v.is_empty() {
            vec![base]
        } else {
            v.to_vec()
        }
    }

    pub fn t_values(&self) -> Vec<usize> {
        Self::list(&self.experiment.t, self.solver.t)
    }

    pub fn k_values(&self) -> Vec<usize> {
        Self::list(&self.experiment.k, self.solver.k)
    }

    pub fn q_values(&self) -> Vec<usize> {
        Self::list(&self.experiment.q, self.solver.q)
    }

    pub fn m1_values(&self) -> Vec<usize> {
        Self::list(&self.experiment.m1, 200)
    }

    pub fn eta_values(&self) -> Vec<StepSchedule> {
        Self::list(&self.experiment.eta, self.solver.eta)
    }

    /// The Cartesian product of the swept lists in `T, K, Q, m1, eta`
    /// lexicographic order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &t in &self.t_values() {
            for &k in &self.k_values() {
                for &q in &self.q_values() {
                    for &m1 in &self.m1_values() {
                        for &eta in &self.eta_values() {
                            let mut spec = self.solver.clone();
                            spec.t = t;
                            spec.k = k;
                            spec.q = q;
                            spec.eta = eta;
                            out.push(Cell { spec, m1 });
                        }
                    }
                }
            }
        }
        out
    }

    /// Checks every cell and the experiment-level sizes.
    pub fn validate(&self) -> Result<(), CliError> {
        let e = &self.experiment;
        let bad = |field: &str, why: &str| Err(CliError::Config(format!("experiment.{field}: {why}")));
        if e.replicates == 0 {
            return bad("replicates", "must be >= 1");
        }
        if e.m2 == 0 {
            return bad("m2", "must be >= 1");
        }
        if e.m_test == Some(0) {
            return bad("m_test", "must be >= 1");
        }
        if self.m1_values().contains(&0) {
            return bad("m1", "entries must be >= 1");
        }
        if let Some(v) = &e.stability.indices {
            if v.is_empty() {
                return Err(CliError::Config(
                    "stability.indices: must name at least one index".into(),
                ));
            }
        }
        if e.mode == Mode::Bounds {
            return Ok(());
        }
        for cell in self.cells() {
            cell.spec
                .validate()
                .map_err(|err| CliError::Config(format!("solver: {err}")))?;
        }
        Ok(())
    }
}

fn section<'a>(root: &'a mut Map<String, Value>, key: &str) -> Option<&'a mut Map<String, Value>> {
    root.entry(key.to_string()).or_insert_with(|| json!({})).as_object_mut()
}

fn fill(obj: &mut Map<String, Value>, key: &str, v: Value) {
    obj.entry(key.to_string()).or_insert(v);
}

/// Fills fields the user left out with the preset's values. `K` is only
/// filled for the two-timescale algorithms.
fn apply_preset(root: &mut Map<String, Value>, name: &str) -> Result<(), CliError> {
    let (m1, t, k) = match name {
        "paper-default" => (2000, 50, 300),
        "desk" => (200, 50, 30),
        other => {
            return Err(CliError::Config(format!(
                "preset: unknown preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    let eta = json!({"kind": "exponential", "init": 1e-3, "rate": 0.95});
    if let Some(exp) = section(root, "experiment") {
        fill(exp, "m1", json!([m1]));
    }
    if let Some(solver) = section(root, "solver") {
        fill(solver, "T", json!(t));
        fill(solver, "eta", eta);
        if solver.get("algorithm").is_some_and(|a| a != "SSGDA") {
            fill(solver, "K", json!(k));
        }
    }
    root.insert("preset".into(), json!(name));
    Ok(())
}

/// Parses a JSON config. `preset` overrides the file's `preset` field and
/// `seed` its root seed.
pub fn parse_config(text: &str, preset: Option<&str>, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse error: {e}")))?;
    let root = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("parse error: the config must be a JSON object".into()))?;
    let preset = match preset {
        Some(p) => Some(p.to_string()),
        None => match root.get("preset") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(CliError::Config("preset: expected a string".into())),
        },
    };
    if let Some(p) = &preset {
        apply_preset(root, p)?;
    }
    if let Some(s) = seed {
        root.insert("seed".into(), json!(s));
    }
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            CliError::Config(format!("parse error: {inner}"))
        } else {
            CliError::Config(format!("parse error at `{path}`: {inner}"))
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}
