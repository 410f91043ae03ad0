use std::path::Path;
use std::process::{Command, Output};

use bimax_cli::csvout::split_preamble;
use serde_json::Value;

fn bimax(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimax"))
        .args(args)
        .current_dir(dir)
        .env_remove("BIMAX_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    let (_, body) = split_preamble(csv);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records().map(|x| x.unwrap().iter().map(str::to_string).collect()).collect()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let (_, body) = split_preamble(csv);
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).expect("column exists");
    r.records().map(|x| x.unwrap()[idx].to_string()).collect()
}

fn floats(csv: &str, name: &str) -> Vec<f64> {
    column(csv, name).iter().map(|s| s.parse().unwrap()).collect()
}

const RUN: &str = r#"{
  "seed": 5,
  "problem": {"kind": "quadratic"},
  "solver": {"algorithm": "SSGDA", "T": 25},
  "experiment": {"mode": "run", "m1": [40], "m2": 40}
}"#;

#[test]
fn run_artifact_has_trajectory_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "quad_ssgda.json", RUN);
    let out = bimax(&["run", "--config", &cfg, "--out", "a"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    bimax(&["run", "--config", &cfg, "--out", "b"], dir.path());
    let read = |d: &str| -> Value {
        let text = std::fs::read_to_string(dir.path().join(d).join("run.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    };
    let (mut a, mut b) = (read("a"), read("b"));
    assert_eq!(a["loss_trajectory"].as_array().unwrap().len(), 25);
    assert_eq!(a["status"], "ok");
    assert_eq!(a["config"]["solver"]["T"], 25);
    a["wall_time"] = Value::Null;
    b["wall_time"] = Value::Null;
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn negative_t_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"problem": {"kind": "quadratic"}, "solver": {"T": -3}, "experiment": {"mode": "run"}}"#,
    );
    let out = bimax(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.T"));
}

#[test]
fn unknown_fields_and_mode_mismatch_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "typo.json",
        r#"{"problem": {"kind": "quadratic"}, "solver": {"etta": 1}, "experiment": {"mode": "run"}}"#,
    );
    let out = bimax(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("etta"));
    let cfg = write(dir.path(), "ok.json", RUN);
    let out = bimax(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bimax(&["run", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_3_with_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.json",
        r#"{
          "problem": {"kind": "quadratic", "radii": null},
          "solver": {"algorithm": "SSGDA", "T": 200, "eta": {"kind": "constant", "c": 50.0}},
          "experiment": {"mode": "run", "m1": [10], "m2": 10}
        }"#,
    );
    let out = bimax(&["run", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "diverged");
    assert!(v["failure"]["t"].as_u64().unwrap() < 200);
}

#[test]
fn k_grid_sweep_gives_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "k.json",
        r#"{
          "problem": {"kind": "quadratic"},
          "solver": {"algorithm": "TSGDA1", "T": 3},
          "experiment": {"mode": "sweep", "K": [10, 100, 150, 200, 250, 300], "m1": [20], "m2": 20, "replicates": 2}
        }"#,
    );
    let out = bimax(&["sweep", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let (comments, _) = split_preamble(&text);
    assert_eq!(comments[0], "schema: bimax-sweep/v1");
    assert!(comments[1].starts_with("config: {"));
    assert!(comments[2].starts_with("noise: mean + sigma"));
    assert_eq!(column(&text, "K"), ["10", "100", "150", "200", "250", "300"]);
    assert!(column(&text, "failures").iter().all(|f| f == "0"));
}

#[test]
fn singleton_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_cfg = write(dir.path(), "run.json.cfg", RUN);
    bimax(&["run", "--config", &run_cfg], dir.path());
    let sweep_cfg = write(
        dir.path(),
        "sweep.json.cfg",
        &RUN.replace(r#""mode": "run""#, r#""mode": "gap", "replicates": 1"#),
    );
    let out = bimax(&["gap", "--config", &sweep_cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    let sweep = std::fs::read_to_string(dir.path().join("gap.csv")).unwrap();
    assert_eq!(rows(&sweep).len(), 1);
    assert_eq!(floats(&sweep, "gap")[0], run["gap"].as_f64().unwrap());
    assert_eq!(floats(&sweep, "empirical_risk")[0], run["empirical_risk"].as_f64().unwrap());
}

#[test]
fn stability_grid_increases_and_smoke_mode_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{
      "seed": 1,
      "problem": {"kind": "quadratic"},
      "solver": {"algorithm": "SSGDA"},
      "experiment": {"mode": "stability", "T": [10, 20, 40], "m1": [50], "m2": 50, "replicates": 10,
                     "stability": {"index_subsample": 10 REPL}}
    }"#;
    let cfg = write(dir.path(), "s.json", &base.replace(" REPL", ""));
    let out = bimax(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    let beta = floats(&text, "beta_l1");
    assert_eq!(beta.len(), 3);
    assert!(beta.windows(2).all(|w| w[0] < w[1]), "{beta:?}");
    assert_eq!(column(&text, "coupling"), ["coupled"; 3]);

    let cfg = write(dir.path(), "z.json", &base.replace(" REPL", r#", "replacement": "identical""#));
    bimax(&["stability", "--config", &cfg, "--out", "z"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("z/stability.csv")).unwrap();
    assert!(floats(&text, "beta_l1").iter().all(|&b| b == 0.0));
    assert!(floats(&text, "beta_l2_sq").iter().all(|&b| b == 0.0));

    let cfg = write(dir.path(), "e.json", &base.replace(" REPL", r#", "indices": []"#));
    let out = bimax(&["stability", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability.indices"));
}

#[test]
fn bounds_rows_cover_branches_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.json",
        r#"{
          "problem": {"kind": "quadratic"},
          "experiment": {"mode": "bounds", "T": [100], "m1": [1000],
                         "bounds": {"c1": [0.05, "1/7", 0.3]}}
        }"#,
    );
    assert_eq!(bimax(&["bounds", "--config", &cfg], dir.path()).status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(column(&text, "branch"), ["c1<1/7", "c1=1/7", "c1>1/7"]);
    let v = floats(&text, "bound_value");
    assert_eq!(v[0], 0.1);
    assert_eq!(v[1], 100.0 * 100f64.ln() / 1000.0);
    assert_eq!(v[2], 100f64.powf(2.1) / 1000.0);

    let cfg = write(
        dir.path(),
        "u.json",
        r#"{
          "problem": {"kind": "quadratic"},
          "experiment": {"mode": "bounds", "T": [1, 2, 4], "K": [1], "Q": [1], "m1": [1],
                         "bounds": {"algorithms": ["TSGDA1", "TSGDA2"], "c2": [0.5, 1.0]}}
        }"#,
    );
    bimax(&["bounds", "--config", &cfg, "--out", "u"], dir.path());
    let text = std::fs::read_to_string(dir.path().join("u/bounds.csv")).unwrap();
    let r = rows(&text);
    let ok: Vec<&Vec<String>> = r.iter().filter(|row| row[10].is_empty()).collect();
    let bad: Vec<&Vec<String>> = r.iter().filter(|row| !row[10].is_empty()).collect();
    assert!(bad.iter().all(|row| row[0] == "TSGDA1" && row[7].starts_with("c2=1")));
    assert!(bad.iter().all(|row| row[10].contains("c2")));
    let unit: Vec<f64> = ok.iter().filter(|row| row[3] == "1").map(|row| row[8].parse().unwrap()).collect();
    assert_eq!(unit, [3f64.sqrt(), 3f64.sqrt()]);
    for alg in ["TSGDA1", "TSGDA2"] {
        let v: Vec<f64> = ok.iter().filter(|row| row[0] == alg).map(|row| row[8].parse().unwrap()).collect();
        assert_eq!(v.len(), 3);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn preset_is_recorded_and_k_only_set_for_two_timescale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"problem": {"kind": "quadratic"}, "solver": {"algorithm": "TSGDA1"}, "experiment": {"mode": "run"}}"#,
    );
    let out = bimax(&["run", "--config", &cfg, "--preset", "desk"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["preset"], "desk");
    assert_eq!(v["config"]["solver"]["K"], 30);
    assert_eq!(v["config"]["experiment"]["m1"][0], 200);
    assert_eq!(v["config"]["solver"]["eta"]["kind"], "exponential");

    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"preset": "paper-default", "problem": {"kind": "quadratic"}, "solver": {"T": 2},
            "experiment": {"mode": "run", "m1": [30]}}"#,
    );
    let out = bimax(&["run", "--config", &cfg, "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/run.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["preset"], "paper-default");
    assert_eq!(v["config"]["solver"]["K"], 1);
    assert_eq!(v["config"]["solver"]["T"], 2);

    let out = bimax(&["run", "--config", &cfg, "--preset", "huge"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "w.json",
        r#"{
          "seed": 9,
          "problem": {"kind": "reweight"},
          "solver": {"algorithm": "TSGDA1", "K": 3},
          "experiment": {"mode": "stability", "T": [5, 10], "m1": [20], "m2": 20, "replicates": 6}
        }"#,
    );
    let serial = bimax(&["stability", "--config", &cfg, "--out", "one", "--workers", "1"], dir.path());
    assert_eq!(serial.status.code(), Some(0), "{}", String::from_utf8_lossy(&serial.stderr));
    let parallel = Command::new(env!("CARGO_BIN_EXE_bimax"))
        .args(["stability", "--config", &cfg, "--out", "many"])
        .env("BIMAX_WORKERS", "4")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(parallel.status.code(), Some(0));
    let a = std::fs::read(dir.path().join("one/stability.csv")).unwrap();
    let b = std::fs::read(dir.path().join("many/stability.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "r.json", RUN);
    bimax(&["run", "--config", &cfg, "--seed", "77"], dir.path());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 77);
}
