use std::path::Path;
use std::process::Command;

use miosindy_harness::config::ExperimentConfig;
use miosindy_harness::record::{AlgorithmResult, Metrics, Timings, TrialRecord};
use miosindy_harness::report::{aggregate, without_timing, write_summary};
use miosindy_harness::{load_records, report_dir, run_experiment, Condition, HarnessError, RunOptions};

fn lorenz_config(out: &Path) -> String {
    format!(
        r#"
experiment = "sample_efficiency"
system = "lorenz"
trials = 2
seed = 11
noise_percent = [0.0, 0.2]
train_seconds = 2.0
dt = 0.002
output_dir = "{}"
test_trajectories = 2
test_seconds = 1.0

[library]
degree = 2
differentiator = {{ method = "centered" }}

[[algorithms]]
name = "miosr"
ks = [1, 2, 3]
alphas = [0.0, 1e-3]

[[algorithms]]
name = "stlsq"
thresholds = [0.05, 0.5, 2.0]
alphas = [0.0]
"#,
        out.display()
    )
}

fn summary_without_timing(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.contains(",fit_time,"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn tiny_experiment_writes_records_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml(&lorenz_config(tmp.path())).unwrap();
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(run.records.len(), 4);
    assert_eq!(run.failures(), 0);

    let records = load_records(tmp.path()).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        assert_eq!(r.config_hash, cfg.hash());
        assert_eq!(r.seed, 11 ^ r.trial as u64);
        assert_eq!(r.initial_condition.len(), 3);
        assert_eq!(r.results.len(), 2);
        let miosr = &r.results[0];
        assert_eq!(miosr.algorithm, "miosr");
        assert_eq!(miosr.supports.len(), 3);
        assert_eq!(miosr.coefficients[0].len(), 10);
        assert!(miosr.solver.unwrap().all_optimal);
        assert!(miosr.chosen.iter().all(|g| g.k.is_some()));
    }
    // same trial index → same initial condition across conditions
    assert_eq!(records[0].initial_condition, records[2].initial_condition);

    // noise-free Lorenz with the true sparsity in the grid is recovered
    let clean = records.iter().filter(|r| r.condition.noise_percent == 0.0);
    for r in clean {
        assert_eq!(r.results[0].metrics.unwrap().tpr, 1.0, "trial {}", r.trial);
    }

    let text = std::fs::read_to_string(tmp.path().join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "experiment,system,algorithm,condition,metric,mean,stderr,n");
    assert!(text.contains("sample_efficiency,lorenz,miosr,noise=0;seconds=2;degree=2,tpr,1,0,2"));
    assert!(tmp.path().join("figure_data.csv").exists());
}

#[test]
fn rerun_is_deterministic_and_resume_reuses_records() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = ExperimentConfig::from_toml(&lorenz_config(a.path())).unwrap();
    let cfg_b = ExperimentConfig::from_toml(&lorenz_config(b.path())).unwrap();
    run_experiment(&cfg_a, &RunOptions::default()).unwrap();
    run_experiment(&cfg_b, &RunOptions::default()).unwrap();
    assert_eq!(summary_without_timing(a.path()), summary_without_timing(b.path()));

    // records survive a JSON round trip exactly, so re-reporting is stable
    let before = summary_without_timing(a.path());
    report_dir(a.path()).unwrap();
    assert_eq!(before, summary_without_timing(a.path()));

    let first = load_records(a.path()).unwrap();
    let resumed = run_experiment(&cfg_a, &RunOptions { resume: true, dry: false }).unwrap();
    let mut resumed = resumed.records;
    resumed.sort_by_key(|r| (r.condition_index, r.trial));
    // resumed records are loaded, not recomputed: timings match bit for bit
    assert_eq!(first, resumed);
}

fn record(condition_index: usize, trial: usize, rmse: f64, tpr: f64) -> TrialRecord {
    TrialRecord {
        config_hash: "h".into(),
        experiment: "sample_efficiency".into(),
        system: "hopf".into(),
        condition_index,
        condition: Condition { noise_percent: 0.2, train_seconds: 1.0, degree: 5 },
        trial,
        seed: trial as u64,
        initial_condition: vec![1.0, 0.0],
        results: vec![AlgorithmResult {
            algorithm: "miosr".into(),
            chosen: Vec::new(),
            supports: Vec::new(),
            coefficients: Vec::new(),
            metrics: Some(Metrics { tpr, coef_error: rmse, rmse, aicc: None }),
            constraint_violation: None,
            max_violation: None,
            solver: None,
            fit_time: 0.5,
            error: None,
        }],
        timings: Timings { simulate: 0.0, library: 0.0, test_set: 0.0 },
        error: None,
    }
}

#[test]
fn aggregation_averages_logs_over_trials() {
    let rows = aggregate(&[record(0, 0, 0.1, 1.0), record(0, 1, 10.0, 0.5)]);
    let get = |m: &str| rows.iter().find(|r| r.metric == m).unwrap();
    // log10(0.1) = −1 and log10(10) = 1 average to 0, stderr = 1
    assert!(get("log10_rmse").mean.abs() < 1e-12);
    assert!((get("log10_rmse").stderr - 1.0).abs() < 1e-12);
    assert_eq!(get("tpr").mean, 0.75);
    assert_eq!(get("tpr").n, 2);

    let single = aggregate(&[record(0, 0, 0.1, 1.0)]);
    assert!(single.iter().all(|r| r.stderr == 0.0 && r.n == 1));
    assert!(single.iter().any(|r| r.is_timing()));
    assert!(without_timing(&single).iter().all(|r| !r.is_timing()));
}

#[test]
fn failed_results_are_excluded_from_means() {
    let mut bad = record(0, 1, 1.0, 0.0);
    bad.results[0].error = Some("boom".into());
    bad.results[0].metrics = None;
    let rows = aggregate(&[record(0, 0, 1.0, 1.0), bad]);
    let tpr = rows.iter().find(|r| r.metric == "tpr").unwrap();
    assert_eq!((tpr.mean, tpr.n), (1.0, 1));
}

#[test]
fn summary_rows_follow_condition_order() {
    let tmp = tempfile::tempdir().unwrap();
    let rows = aggregate(&[record(1, 0, 1.0, 1.0), record(0, 0, 1.0, 0.0)]);
    write_summary(&tmp.path().join("s.csv"), &rows).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("s.csv")).unwrap();
    let tprs: Vec<&str> = text.lines().filter(|l| l.contains(",tpr,")).collect();
    assert!(tprs[0].ends_with(",tpr,0,0,1"));
    assert!(tprs[1].ends_with(",tpr,1,0,1"));
}

#[test]
fn constrained_fits_satisfy_the_constraints() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
experiment = "constraints"
system = "duffing"
trials = 2
seed = 3
noise_percent = 1.0
train_seconds = 5.0
dt = 0.01
output_dir = "{}"
test_trajectories = 2

[library]
degree = 3
differentiator = {{ method = "smoothed", window = 21 }}

[[algorithms]]
name = "miosr"
ks = [2, 4, 6]
alphas = [1e-3]
"#,
        tmp.path().display()
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    for rec in &run.records {
        let labels: Vec<&str> = rec.results.iter().map(|r| r.algorithm.as_str()).collect();
        assert_eq!(labels, ["miosr", "miosr-constrained"]);
        let constrained = &rec.results[1];
        assert!(constrained.max_violation.unwrap() <= 1e-8);
        assert!(rec.results[0].constraint_violation.is_some());
    }
}

#[test]
fn pde_trials_score_in_weak_form() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"
experiment = "pde"
system = "ks"
trials = 1
seed = 5
noise_percent = 1.0
train_seconds = 10.0
dt = 0.1
output_dir = "{}"
test_trajectories = 1
test_seconds = 5.0

[pde]
grid_points = 128

[library]
degree = 3
max_deriv = 4

[library.weak]
num_domains = 100
points_per_domain = 30
per_axis = true

[[algorithms]]
name = "miosr"
ks = [1]
alphas = [0.0]

[[algorithms]]
name = "stlsq"
thresholds = [0.4, 1.0, 2.0]
alphas = [0.0]
"#,
        tmp.path().display()
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let rec = &run.records[0];
    assert!(rec.error.is_none(), "{:?}", rec.error);
    assert_eq!(rec.initial_condition.len(), 128);
    let miosr = &rec.results[0];
    // true sparsity per equation is imposed
    assert_eq!(miosr.supports[0].len(), 3);
    assert_eq!(miosr.coefficients[0].len(), 19);
    assert!(miosr.metrics.unwrap().rmse.is_finite());
}

#[test]
fn invalid_configs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let base = lorenz_config(tmp.path());
    for bad in [
        base.replace("system = \"lorenz\"", "system = \"duffing\"\nbogus = 1"),
        base.replace("experiment = \"sample_efficiency\"", "experiment = \"pde\""),
        base.replace("dt = 0.002", "dt = -1.0"),
    ] {
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(HarnessError::Config(_))));
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_miosindy")).args(args).env("RUST_LOG", "error").output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.toml");
    let out = tmp.path().join("out");
    std::fs::write(&good, lorenz_config(&out).replace("trials = 2", "trials = 1")).unwrap();
    assert_eq!(cli(&["experiment", good.to_str().unwrap()]).status.code(), Some(0));
    assert!(out.join("summary.csv").exists());
    assert_eq!(cli(&["report", out.to_str().unwrap()]).status.code(), Some(0));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"nope\"").unwrap();
    assert_eq!(cli(&["experiment", bad.to_str().unwrap()]).status.code(), Some(2));

    // too few samples to fit: every trial fails, the run still completes
    let short = tmp.path().join("short.toml");
    std::fs::write(
        &short,
        lorenz_config(&tmp.path().join("short")).replace("trials = 2", "trials = 1").replace("train_seconds = 2.0", "train_seconds = 0.01"),
    )
    .unwrap();
    assert_eq!(cli(&["experiment", short.to_str().unwrap()]).status.code(), Some(3));
    assert_eq!(std::fs::read_dir(tmp.path().join("short/records")).unwrap().count(), 2);
}

#[test]
fn cli_simulate_then_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("lorenz.csv");
    let sim = cli(&["simulate", "lorenz", "--seconds", "5", "--seed", "2", "--out", data.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(0));
    let fit = cli(&["fit", data.to_str().unwrap(), "--system", "lorenz", "--degree", "2", "--ks", "1,2,3", "--window", "1"]);
    assert_eq!(fit.status.code(), Some(0));
    let text = String::from_utf8(fit.stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().next().unwrap().starts_with("dx0/dt = -9.99"), "{text}");
}
