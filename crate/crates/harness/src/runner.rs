//! Trial execution: simulate, corrupt, build the library, fit every
//! configured algorithm, score on fresh clean data, persist.

use std::path::Path;
use std::time::Instant;

use miosindy::baselines::{ssr, Aggregation, Bootstrap, StlsqConfig};
use miosindy::library::{
    curl_free_constraints, normalize_columns, pde_true_coefficients, polynomial_library, weak_pde_library, CandidateLibrary,
    WeakConfig,
};
use miosindy::linalg::LinearConstraints;
use miosindy::metrics::{coefficient_error, derivative_rmse, true_positivity_rate};
use miosindy::pde::{add_field_noise, PdeSystem};
use miosindy::selection::{build_fit_data, select_model, Algorithm, DataSpec, GridPoint, Selection, SelectionConfig};
use miosindy::solver::support_of;
use miosindy::systems::{add_noise, rk4_integrate, sample_initial_condition, OdeSystem};
use miosindy::{solve_sparse, BnbConfig, Matrix, RngStream, SolveStatus, SparseRegressionProblem, Vector};
use rayon::prelude::*;

use crate::config::{Condition, ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::record::{AlgorithmResult, Metrics, SolverStats, Timings, TrialRecord};
use crate::report::{write_figure_data, write_summary, SummaryRow};

// Substream indices of a trial's seed. The initial condition comes from the
// root stream so it is shared by every condition of the same trial.
const NOISE_STREAM: u64 = 1;
const WEAK_STREAM: u64 = 10_000;
const TEST_STREAM: u64 = 100_000;

/// Records plus the aggregate written next to them.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentRun {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.failed()).count()
    }
}

/// Options that do not change results.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reuse records already on disk instead of recomputing those trials.
    pub resume: bool,
    /// Do not write anything.
    pub dry: bool,
}

/// Run every (condition, trial) pair, write `records/*.json` and
/// `summary.csv` under the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRun> {
    cfg.validate()?;
    let hash = cfg.hash();
    let conditions = cfg.conditions();
    let rec_dir = cfg.output_dir.join("records");
    let jobs: Vec<(usize, usize)> =
        (0..conditions.len()).flat_map(|ci| (0..cfg.trials).map(move |t| (ci, t))).collect();
    let work = |&(ci, trial): &(usize, usize)| -> Result<TrialRecord> {
        let path = rec_dir.join(TrialRecord::file_name(ci, trial));
        if opts.resume && path.exists() {
            let rec = TrialRecord::load(&path)?;
            if rec.config_hash == hash {
                return Ok(rec);
            }
        }
        let rec = run_trial(cfg, &hash, ci, conditions[ci], trial);
        if !opts.dry {
            rec.save(&rec_dir)?;
        }
        Ok(rec)
    };
    let records: Vec<TrialRecord> = if cfg.workers == 0 {
        jobs.par_iter().map(work).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(work).collect::<Result<_>>())?
    };
    let summary = crate::report::aggregate(&records);
    if !opts.dry {
        std::fs::create_dir_all(&cfg.output_dir)?;
        write_summary(&cfg.output_dir.join("summary.csv"), &summary)?;
        write_figure_data(&cfg.output_dir.join("figure_data.csv"), &summary)?;
    }
    Ok(ExperimentRun { records, summary })
}

/// One trial; failures are captured in the record rather than propagated.
pub fn run_trial(cfg: &ExperimentConfig, hash: &str, ci: usize, cond: Condition, trial: usize) -> TrialRecord {
    let seed = cfg.trial_seed(trial);
    let mut rec = TrialRecord {
        config_hash: hash.to_string(),
        experiment: cfg.experiment.name().to_string(),
        system: cfg.system.clone(),
        condition_index: ci,
        condition: cond,
        trial,
        seed,
        initial_condition: Vec::new(),
        results: Vec::new(),
        timings: Timings { simulate: 0.0, library: 0.0, test_set: 0.0 },
        error: None,
    };
    let outcome = match cfg.experiment {
        ExperimentKind::Pde => pde_trial(cfg, ci, cond, seed, &mut rec),
        _ => ode_trial(cfg, ci, cond, seed, &mut rec),
    };
    if let Err(e) = outcome {
        log::warn!("{} trial {trial} ({}) failed: {e}", cfg.experiment.name(), cond.label());
        rec.error = Some(e.to_string());
    }
    rec
}

fn weak_config(cfg: &ExperimentConfig, seed: u64, ci: usize) -> Option<WeakConfig> {
    cfg.library.weak.as_ref().map(|w| WeakConfig {
        num_domains: w.num_domains,
        points_per_domain: w.points_per_domain,
        per_axis: w.per_axis,
        test_power: w.test_power,
        seed: RngStream::new(seed).substream(WEAK_STREAM + ci as u64).seed(),
    })
}

fn solver_stats(sel: &Selection) -> Option<SolverStats> {
    if sel.solves.is_empty() {
        return None;
    }
    let all_optimal = sel.solves.iter().all(|s| s.status == SolveStatus::Optimal);
    let max_gap = sel
        .solves
        .iter()
        .filter(|s| s.status != SolveStatus::Optimal)
        .map(|s| if s.gap.is_finite() { s.gap } else { f64::INFINITY })
        .fold(0.0, f64::max);
    Some(SolverStats {
        solves: sel.solves.len(),
        all_optimal,
        max_gap: if max_gap.is_finite() { max_gap } else { f64::MAX },
        nodes: sel.solves.iter().map(|s| s.nodes).sum(),
        max_solve_time: sel.solves.iter().map(|s| s.wall_time).fold(0.0, f64::max),
    })
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn supports(m: &Matrix) -> Vec<Vec<usize>> {
    m.column_iter().map(|c| support_of(&c.into_owned())).collect()
}

fn stacked(m: &Matrix) -> Vector {
    Vector::from_iterator(m.len(), m.iter().copied())
}

fn failed_result(label: &str, err: impl ToString) -> AlgorithmResult {
    AlgorithmResult {
        algorithm: label.to_string(),
        chosen: Vec::new(),
        supports: Vec::new(),
        coefficients: Vec::new(),
        metrics: None,
        constraint_violation: None,
        max_violation: None,
        solver: None,
        fit_time: 0.0,
        error: Some(err.to_string()),
    }
}

/// Clean test libraries: fresh initial conditions, `test_seconds` each.
fn ode_test_set(cfg: &ExperimentConfig, sys: &OdeSystem, degree: usize, seed: u64) -> Result<Vec<Matrix>> {
    let mut rng = RngStream::new(seed).substream(TEST_STREAM);
    (0..cfg.test_trajectories)
        .map(|_| {
            let x0 = sample_initial_condition(sys, &mut rng)?;
            let traj = rk4_integrate(sys, &x0, cfg.test_seconds, cfg.dt)?;
            Ok(polynomial_library(&traj.select_columns(sys.library_vars()), degree, cfg.library.include_bias).theta)
        })
        .collect()
}

fn mean_rmse(truth: &Matrix, est: &Matrix, tests: &[Matrix]) -> Result<f64> {
    let mut total = 0.0;
    for theta in tests {
        total += derivative_rmse(truth, est, theta)?;
    }
    Ok(total / tests.len() as f64)
}

fn ode_trial(cfg: &ExperimentConfig, ci: usize, cond: Condition, seed: u64, rec: &mut TrialRecord) -> Result<()> {
    let sys = OdeSystem::by_name(&cfg.system)?;
    let start = Instant::now();
    let x0 = sample_initial_condition(&sys, &mut RngStream::new(seed))?;
    rec.initial_condition = x0.iter().copied().collect();
    let clean = rk4_integrate(&sys, &x0, cond.train_seconds, cfg.dt)?;
    let noisy = add_noise(&clean, cond.noise_percent, &mut RngStream::new(seed).substream(NOISE_STREAM + ci as u64));
    rec.timings.simulate = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let spec = DataSpec {
        degree: cond.degree,
        include_bias: cfg.library.include_bias,
        differentiator: cfg.library.differentiator,
        weak: weak_config(cfg, seed, ci),
        split_fraction: cfg.split_fraction,
    };
    let data = build_fit_data(&noisy, &sys, &spec, cond.noise_percent)?;
    rec.timings.library = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let truth = sys.true_coefficients(cond.degree, cfg.library.include_bias)?;
    let tests = ode_test_set(cfg, &sys, cond.degree, seed)?;
    rec.timings.test_set = start.elapsed().as_secs_f64();

    let constrained = cfg.experiment == ExperimentKind::Constraints;
    let cons = if constrained { Some(curl_free_constraints(cond.degree, cfg.library.include_bias)?) } else { None };
    let base = SelectionConfig {
        split_fraction: cfg.split_fraction,
        // constrained comparisons keep the regularized coefficients
        unbias: !constrained,
        bnb: BnbConfig { time_limit: cfg.time_limit, ..BnbConfig::default() },
        seed,
        ..SelectionConfig::default()
    };

    let mut variants: Vec<(String, &Algorithm, SelectionConfig)> = Vec::new();
    for algo in &cfg.algorithms {
        match (&cons, algo) {
            (Some(c), Algorithm::Miosr { .. }) => {
                // same joint solver with and without the side constraints
                let free = LinearConstraints::empty(c.ncols());
                variants.push((algo.label().to_string(), algo, SelectionConfig { constraints: Some(free), ..base.clone() }));
                variants.push((
                    format!("{}-constrained", algo.label()),
                    algo,
                    SelectionConfig { constraints: Some(c.clone()), ..base.clone() },
                ));
            }
            _ => variants.push((algo.label().to_string(), algo, base.clone())),
        }
    }

    for (label, algo, sel_cfg) in variants {
        let result = (|| -> Result<AlgorithmResult> {
            let sel = select_model(&data, algo, &sel_cfg)?;
            let est = &sel.coefficients;
            let joint = sel_cfg.constraints.is_some();
            let aicc = if joint { sel.aicc.first().copied() } else { Some(sel.aicc.iter().sum()) };
            let metrics = Metrics {
                tpr: true_positivity_rate(&truth, est)?,
                coef_error: coefficient_error(&truth, est)?,
                rmse: mean_rmse(&truth, est, &tests)?,
                aicc: aicc.filter(|v| v.is_finite()),
            };
            let (mean_v, max_v) = match &cons {
                Some(c) => (Some(c.mean_violation(&stacked(est))), Some(c.max_violation(&stacked(est)))),
                None => (None, None),
            };
            Ok(AlgorithmResult {
                algorithm: label.clone(),
                chosen: sel.chosen.clone(),
                supports: supports(est),
                coefficients: columns(est),
                metrics: Some(metrics),
                constraint_violation: mean_v,
                max_violation: max_v,
                solver: solver_stats(&sel),
                fit_time: sel.fit_time,
                error: None,
            })
        })();
        rec.results.push(result.unwrap_or_else(|e| failed_result(&label, e)));
    }
    Ok(())
}

/// Per-column achievability fits on a normalized weak library, returning
/// original-unit coefficients plus the settings used.
struct PdeFit {
    xi: Matrix,
    chosen: Vec<GridPoint>,
    stats: Option<SolverStats>,
}

/// Rank a candidate column against the truth: higher TPR, then lower error.
fn column_score(truth: &Matrix, col: usize, xi: &Vector) -> (f64, f64) {
    let t = truth.column(col).into_owned();
    let tm = Matrix::from_column_slice(t.len(), 1, t.as_slice());
    let xm = Matrix::from_column_slice(xi.len(), 1, xi.as_slice());
    (
        true_positivity_rate(&tm, &xm).unwrap_or(0.0),
        coefficient_error(&tm, &xm).unwrap_or(f64::INFINITY),
    )
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn pde_fit(lib: &CandidateLibrary, truth_scaled: &Matrix, algo: &Algorithm, cfg: &ExperimentConfig, seed: u64) -> Result<PdeFit> {
    let (dl, d) = (lib.theta.ncols(), lib.targets.ncols());
    let mut xi = Matrix::zeros(dl, d);
    let mut chosen = Vec::with_capacity(d);
    let mut solves: Vec<(SolveStatus, f64, usize, f64)> = Vec::new();
    let targets = &lib.targets;
    let true_k = |j: usize| truth_scaled.column(j).iter().filter(|v| **v != 0.0).count();
    // keep the best candidate per column
    let pick = |j: usize, cands: Vec<(GridPoint, Vector)>, xi: &mut Matrix, chosen: &mut Vec<GridPoint>| {
        let mut best: Option<((f64, f64), GridPoint, Vector)> = None;
        for (g, v) in cands {
            let s = column_score(truth_scaled, j, &v);
            if best.as_ref().is_none_or(|b| better(s, b.0)) {
                best = Some((s, g, v));
            }
        }
        if let Some((_, g, v)) = best {
            xi.set_column(j, &v);
            chosen.push(g);
        }
    };
    match algo {
        Algorithm::Miosr { alphas, .. } => {
            let alpha = alphas.first().copied().unwrap_or(0.0);
            for j in 0..d {
                let k = true_k(j);
                let y = targets.column(j).into_owned();
                let problem = SparseRegressionProblem::from_data(&lib.theta, &y, alpha, k)?;
                let sol = solve_sparse(&problem, &BnbConfig { time_limit: cfg.time_limit, ..BnbConfig::default() })?;
                solves.push((sol.status, sol.gap, sol.nodes_explored, sol.wall_time));
                xi.set_column(j, &sol.xi);
                chosen.push(GridPoint { alpha, k: Some(k), threshold: None });
            }
        }
        Algorithm::Stlsq { thresholds, alphas } => {
            for j in 0..d {
                let y = targets.column(j).into_owned();
                let mut cands = Vec::new();
                for &alpha in alphas {
                    for &t in thresholds {
                        let sol = miosindy::baselines::stlsq(&lib.theta, &y, &StlsqConfig::new(t, alpha))?;
                        cands.push((GridPoint { alpha, k: None, threshold: Some(t) }, sol.xi));
                    }
                }
                pick(j, cands, &mut xi, &mut chosen);
            }
        }
        Algorithm::EStlsq { thresholds, alphas, n_models } => {
            // library ensembling: keep the true number of most frequently
            // included terms
            let boot = Bootstrap::new(&lib.theta, targets, *n_models, &mut RngStream::new(seed))?;
            for j in 0..d {
                let k = true_k(j);
                let mut cands = Vec::new();
                for &alpha in alphas {
                    for &t in thresholds {
                        let fit = boot.fit(j, &StlsqConfig::new(t, alpha), Aggregation::Median, Some(k))?;
                        cands.push((GridPoint { alpha, k: Some(k), threshold: Some(t) }, fit.solution.xi));
                    }
                }
                pick(j, cands, &mut xi, &mut chosen);
            }
        }
        Algorithm::Ssr { alphas } => {
            for j in 0..d {
                let y = targets.column(j).into_owned();
                let mut cands = Vec::new();
                for &alpha in alphas {
                    for sol in ssr(&lib.theta, &y, alpha)? {
                        let k = sol.support.len();
                        cands.push((GridPoint { alpha, k: Some(k), threshold: None }, sol.xi));
                    }
                }
                pick(j, cands, &mut xi, &mut chosen);
            }
        }
    }
    let stats = (!solves.is_empty()).then(|| SolverStats {
        solves: solves.len(),
        all_optimal: solves.iter().all(|s| s.0 == SolveStatus::Optimal),
        max_gap: solves.iter().filter(|s| s.0 != SolveStatus::Optimal).map(|s| s.1).fold(0.0, f64::max),
        nodes: solves.iter().map(|s| s.2).sum(),
        max_solve_time: solves.iter().map(|s| s.3).fold(0.0, f64::max),
    });
    Ok(PdeFit { xi: lib.denormalize(&xi), chosen, stats })
}

fn pde_trial(cfg: &ExperimentConfig, ci: usize, cond: Condition, seed: u64, rec: &mut TrialRecord) -> Result<()> {
    let system = PdeSystem::from_name(&cfg.system)?;
    let grid = cfg.pde.as_ref().map(|p| p.grid_points).unwrap_or(256);
    let max_deriv = cfg.library.max_deriv.unwrap_or(2);
    let weak = weak_config(cfg, seed, ci).ok_or_else(|| HarnessError::Config("pde runs need library.weak".into()))?;

    let start = Instant::now();
    let (ic, field) = system.simulate(grid, cond.train_seconds, cfg.dt, &mut RngStream::new(seed))?;
    rec.initial_condition = ic;
    let noisy = add_field_noise(&field, cond.noise_percent, &mut RngStream::new(seed).substream(NOISE_STREAM + ci as u64));
    rec.timings.simulate = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let lib = normalize_columns(&weak_pde_library(&noisy, cond.degree, max_deriv, &weak)?)?;
    rec.timings.library = start.elapsed().as_secs_f64();

    // truth on the normalized columns, for support-based achievability picks
    let truth = pde_true_coefficients(system, cond.degree, max_deriv)?;
    let mut truth_scaled = truth.clone();
    for (i, s) in lib.scales.iter().enumerate() {
        truth_scaled.row_mut(i).scale_mut(*s);
    }

    // clean test fields, scored in weak form
    let start = Instant::now();
    let mut test_rng = RngStream::new(seed).substream(TEST_STREAM);
    let mut tests = Vec::with_capacity(cfg.test_trajectories);
    for i in 0..cfg.test_trajectories {
        let (_, f) = system.simulate(grid, cfg.test_seconds, cfg.dt, &mut test_rng)?;
        let wc = WeakConfig { seed: test_rng.substream(i as u64).seed(), ..weak.clone() };
        tests.push(weak_pde_library(&f, cond.degree, max_deriv, &wc)?.theta);
    }
    rec.timings.test_set = start.elapsed().as_secs_f64();

    for algo in &cfg.algorithms {
        let label = algo.label();
        let start = Instant::now();
        let result = (|| -> Result<AlgorithmResult> {
            let fit = pde_fit(&lib, &truth_scaled, algo, cfg, seed)?;
            let fit_time = start.elapsed().as_secs_f64();
            let metrics = Metrics {
                tpr: true_positivity_rate(&truth, &fit.xi)?,
                coef_error: coefficient_error(&truth, &fit.xi)?,
                rmse: mean_rmse(&truth, &fit.xi, &tests)?,
                aicc: None,
            };
            Ok(AlgorithmResult {
                algorithm: label.to_string(),
                chosen: fit.chosen,
                supports: supports(&fit.xi),
                coefficients: columns(&fit.xi),
                metrics: Some(metrics),
                constraint_violation: None,
                max_violation: None,
                solver: fit.stats,
                fit_time,
                error: None,
            })
        })();
        rec.results.push(result.unwrap_or_else(|e| failed_result(label, e)));
    }
    Ok(())
}

/// Load a config, apply overrides and run it.
pub fn run_config_file(path: &Path, overrides: &Overrides, opts: &RunOptions) -> Result<ExperimentRun> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg);
    run_experiment(&cfg, opts)
}

/// Command-line overrides of config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<std::path::PathBuf>,
    pub workers: Option<usize>,
    pub time_limit: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output_dir {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(t) = self.time_limit {
            cfg.time_limit = t;
        }
    }
}
