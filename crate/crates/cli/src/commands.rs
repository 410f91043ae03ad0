//! The five subcommands. Each returns its artifact as a string so that
//! callers can compare outputs byte for byte before writing them.

use std::time::Instant;

use bimax_core::analysis::{
    estimate_stability, eta_prime, measure_gap, rate_bound, GapConfig, GapReport, RateQuery, StabilityConfig,
    StabilityEstimate,
};
use bimax_core::rng::{derive, Stream};
use bimax_core::solvers::mean_upper_loss;
use bimax_core::{run, Algorithm, BimaxError, DatasetPair, SolverError, SolverSpec};
use serde_json::json;

use crate::config::{Cell, ExperimentConfig, Mode, Quantity};
use crate::csvout::{fmt_f64, fmt_opt, Table};
use crate::CliError;

/// A finished artifact. `diverged` is set by `run` when the solver blew up.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
    pub diverged: bool,
}

fn file_name(cfg: &ExperimentConfig, mode: Mode, ext: &str) -> String {
    cfg.experiment
        .output
        .clone()
        .unwrap_or_else(|| format!("{}.{ext}", mode.name()))
}

fn core_err(e: BimaxError) -> CliError {
    CliError::Config(e.to_string())
}

/// Dispatches on `mode`, which must agree with the config's own mode
/// (`sweep` and `gap` are interchangeable).
pub fn execute(mode: Mode, cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let declared = cfg.experiment.mode;
    let compatible = declared == mode || matches!((declared, mode), (Mode::Sweep, Mode::Gap) | (Mode::Gap, Mode::Sweep));
    if !compatible {
        return Err(CliError::Config(format!(
            "experiment.mode: config declares `{}` but the `{}` command was invoked",
            declared.name(),
            mode.name()
        )));
    }
    match mode {
        Mode::Run => cmd_run(cfg),
        Mode::Sweep | Mode::Gap => cmd_sweep(cfg, mode),
        Mode::Stability => cmd_stability(cfg),
        Mode::Bounds => cmd_bounds(cfg),
    }
}

fn m_test(cfg: &ExperimentConfig, m1: usize) -> usize {
    cfg.experiment.m_test.unwrap_or(10 * m1)
}

fn single_cell(cfg: &ExperimentConfig) -> Result<Cell, CliError> {
    let cells = cfg.cells();
    if cells.len() != 1 {
        return Err(CliError::Config(format!(
            "experiment: `run` takes a single cell but the swept lists give {}",
            cells.len()
        )));
    }
    Ok(cells.into_iter().next().expect("one cell"))
}

/// One solver run on the dataset and index stream of replicate 0.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let problem = cfg.problem.build()?;
    let p = problem.as_dyn();
    let cell = single_cell(cfg)?;
    let data = DatasetPair::generate(
        p,
        cell.m1,
        cfg.experiment.m2,
        m_test(cfg, cell.m1),
        derive(cfg.seed, Stream::Data, &[0]),
    )
    .map_err(core_err)?;
    let mut spec = cell.spec.clone();
    spec.seed = derive(cfg.seed, Stream::Indices, &[0]);
    let start = Instant::now();
    let (record, failure) = match run(p, &data, &spec) {
        Ok(r) => (r, None),
        Err(SolverError::Diverged { t, partial }) => (*partial, Some(t)),
        Err(SolverError::Invalid(e)) => return Err(core_err(e)),
    };
    let wall = start.elapsed().as_secs_f64();
    let w = &record.final_iterate;
    let mut body = json!({
        "schema": "bimax-run/v1",
        "config": cfg,
        "noise": p.noise_model(),
        "status": if failure.is_some() { "diverged" } else { "ok" },
        "loss_trajectory": record.upper_loss,
        "final_iterate": {
            "x": w.x.as_slice(),
            "y": w.y.as_slice(),
            "z": w.z.as_slice(),
            "norm": w.norm(),
        },
        "failure": failure.map(|t| json!({"t": t, "completed_steps": record.upper_loss.len()})),
        "wall_time": wall,
    });
    if failure.is_none() {
        let emp = mean_upper_loss(p, w, &data.validation);
        let pop = mean_upper_loss(p, w, &data.test);
        body["empirical_risk"] = json!(emp);
        body["population_risk_est"] = json!(pop);
        body["gap"] = json!(pop - emp);
    }
    let mut contents = serde_json::to_string_pretty(&body).expect("json values serialize");
    contents.push('\n');
    Ok(Artifact {
        file_name: file_name(cfg, Mode::Run, "json"),
        contents,
        diverged: failure.is_some(),
    })
}

fn cell_columns(spec: &SolverSpec, m1: usize) -> Vec<String> {
    vec![
        spec.algorithm.to_string(),
        spec.t.to_string(),
        spec.k.to_string(),
        spec.q.to_string(),
        m1.to_string(),
        spec.eta.to_string(),
    ]
}

const CELL_HEADER: [&str; 6] = ["algorithm", "T", "K", "Q", "m1", "eta_desc"];

/// Gap measurements over the Cartesian product of the swept lists.
pub fn cmd_sweep(cfg: &ExperimentConfig, mode: Mode) -> Result<Artifact, CliError> {
    let problem = cfg.problem.build()?;
    let p = problem.as_dyn();
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend([
        "replicates",
        "empirical_risk",
        "population_risk_est",
        "gap",
        "gap_stderr",
        "optimization_error",
        "excess_risk",
        "failures",
    ]);
    let mut table = Table::new("sweep", cfg, p.noise_model(), &header);
    for cell in cfg.cells() {
        let gcfg = GapConfig {
            m1: cell.m1,
            m2: cfg.experiment.m2,
            m_test: m_test(cfg, cell.m1),
            replicates: cfg.experiment.replicates,
            seed: cfg.seed,
        };
        let g: GapReport = measure_gap(p, &cell.spec, &gcfg).map_err(core_err)?;
        let mut row = cell_columns(&cell.spec, cell.m1);
        row.extend([
            g.replicates.to_string(),
            fmt_f64(g.empirical_risk),
            fmt_f64(g.population_risk_est),
            fmt_f64(g.gap),
            fmt_f64(g.gap_stderr),
            fmt_opt(g.optimization_error),
            fmt_opt(g.excess_risk),
            g.failures.to_string(),
        ]);
        table.push(row);
    }
    Ok(Artifact {
        file_name: file_name(cfg, mode, "csv"),
        contents: table.finish()?,
        diverged: false,
    })
}

/// Stability estimates over the swept grid.
pub fn cmd_stability(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let problem = cfg.problem.build()?;
    let p = problem.as_dyn();
    let mut header: Vec<&str> = CELL_HEADER.to_vec();
    header.extend([
        "beta_l1",
        "beta_l1_stderr",
        "beta_l2_sq",
        "beta_l2_sq_stderr",
        "coupling",
        "indices_used",
        "replicates",
        "failures",
    ]);
    let mut table = Table::new("stability", cfg, p.noise_model(), &header);
    let st = &cfg.experiment.stability;
    for cell in cfg.cells() {
        let scfg = StabilityConfig {
            m1: cell.m1,
            m2: cfg.experiment.m2,
            indices: st.selection(),
            replicates: cfg.experiment.replicates,
            coupling: st.coupling,
            replacement: st.replacement,
            seed: cfg.seed,
        };
        let e: StabilityEstimate = estimate_stability(p, &cell.spec, &scfg).map_err(|err| {
            CliError::Config(match err {
                BimaxError::IndexOutOfRange { .. } => format!("stability.indices: {err}"),
                other => other.to_string(),
            })
        })?;
        let mut row = cell_columns(&cell.spec, cell.m1);
        row.extend([
            fmt_f64(e.beta_l1),
            fmt_f64(e.beta_l1_stderr),
            fmt_f64(e.beta_l2_sq),
            fmt_f64(e.beta_l2_sq_stderr),
            serde_json::to_value(e.coupling)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            e.indices_used.to_string(),
            e.replicates.to_string(),
            e.failures.to_string(),
        ]);
        table.push(row);
    }
    Ok(Artifact {
        file_name: file_name(cfg, Mode::Stability, "csv"),
        contents: table.finish()?,
        diverged: false,
    })
}

fn join_constants(pairs: &[(&str, f64)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

struct BoundRow {
    algorithm: Algorithm,
    quantity: Quantity,
    t: usize,
    k: usize,
    q: usize,
    m1: usize,
    constants: String,
    query: Result<RateQuery, String>,
}

/// Rate expressions over the requested grid. Out-of-range constants give a
/// row with an error message instead of a value.
pub fn cmd_bounds(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let problem = cfg.problem.build()?;
    let p = problem.as_dyn();
    let b = &cfg.experiment.bounds;
    let v = b.v.or(p.radii().map(|r| 2.0 * r.x));
    let mut registry = p.constants().clone();
    if let Some(v) = v {
        registry = registry.with_v(v).map_err(|e| CliError::Config(format!("bounds.V: {e}")))?;
    }
    let mut rows = Vec::new();
    for &alg in &b.algorithms {
        for &quantity in &b.quantities {
            for &t in &cfg.t_values() {
                for &m1 in &cfg.m1_values() {
                    let (tf, mf) = (t as f64, m1 as f64);
                    let row = |k, q, constants: String, query| BoundRow {
                        algorithm: alg,
                        quantity,
                        t,
                        k,
                        q,
                        m1,
                        constants,
                        query,
                    };
                    match (alg, quantity) {
                        (Algorithm::Ssgda, Quantity::Generalization) => {
                            for c1 in &b.c1 {
                                rows.push(row(
                                    1,
                                    1,
                                    join_constants(&[("c1", c1.0)]),
                                    Ok(RateQuery::SsgdaGen { t: tf, m1: mf, c1: c1.0 }),
                                ));
                            }
                        }
                        (Algorithm::Ssgda, Quantity::Optimization) => {
                            for eta in cfg.eta_values() {
                                let mut s = cfg.solver.clone();
                                s.eta = eta;
                                let ep = eta_prime(&s);
                                rows.push(row(
                                    1,
                                    1,
                                    join_constants(&[("eta_prime", ep), ("V", v.unwrap_or(f64::NAN))]),
                                    Ok(RateQuery::SsgdaOpt { t: tf, eta_prime: ep }),
                                ));
                            }
                        }
                        (Algorithm::Ssgda, Quantity::Excess) => {
                            rows.push(row(1, 1, String::new(), Ok(RateQuery::SsgdaExcess { m1: mf })));
                        }
                        (Algorithm::Tsgda1, Quantity::Generalization) => {
                            for &k in &cfg.k_values() {
                                for c2 in &b.c2 {
                                    for c3 in &b.c3 {
                                        rows.push(row(
                                            k,
                                            1,
                                            join_constants(&[("c2", c2.0), ("c3", c3.0)]),
                                            Ok(RateQuery::Tsgda1Gen {
                                                t: tf,
                                                k: k as f64,
                                                m1: mf,
                                                c2: c2.0,
                                                c3: c3.0,
                                            }),
                                        ));
                                    }
                                }
                            }
                        }
                        (Algorithm::Tsgda2, Quantity::Generalization) => {
                            for &k in &cfg.k_values() {
                                for &q in &cfg.q_values() {
                                    for c5 in &b.c5 {
                                        for c6 in &b.c6 {
                                            for c7 in &b.c7 {
                                                rows.push(row(
                                                    k,
                                                    q,
                                                    join_constants(&[("c5", c5.0), ("c6", c6.0), ("c7", c7.0)]),
                                                    Ok(RateQuery::Tsgda2Gen {
                                                        t: tf,
                                                        k: k as f64,
                                                        q: q as f64,
                                                        m1: mf,
                                                        c5: c5.0,
                                                        c6: c6.0,
                                                        c7: c7.0,
                                                    }),
                                                ));
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        (alg, quantity) => rows.push(row(
                            1,
                            1,
                            String::new(),
                            Err(format!("no {} rate for {alg}", quantity.name())),
                        )),
                    }
                }
            }
        }
    }
    let mut table = Table::new(
        "bounds",
        cfg,
        p.noise_model(),
        &[
            "algorithm",
            "quantity",
            "branch",
            "T",
            "K",
            "Q",
            "m1",
            "constants",
            "bound_value",
            "ln_bound_value",
            "error",
        ],
    );
    for r in rows {
        let outcome = r.query.and_then(|q| rate_bound(&q, &registry).map_err(|e| e.to_string()));
        let (branch, value, ln, error) = match outcome {
            Ok(v) => (v.branch.to_string(), fmt_f64(v.value), fmt_f64(v.ln_value), String::new()),
            Err(e) => (String::new(), String::new(), String::new(), e),
        };
        table.push(vec![
            r.algorithm.to_string(),
            r.quantity.name().to_string(),
            branch,
            r.t.to_string(),
            r.k.to_string(),
            r.q.to_string(),
            r.m1.to_string(),
            r.constants,
            value,
            ln,
            error,
        ]);
    }
    Ok(Artifact {
        file_name: file_name(cfg, Mode::Bounds, "csv"),
        contents: table.finish()?,
        diverged: false,
    })
}
