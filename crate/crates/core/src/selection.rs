//! AICc model selection over hyperparameter grids with a train/validation
//! split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ssr, stlsq_gram, Aggregation, Bootstrap, StlsqConfig};
use crate::differentiation::{differentiate, smooth, Differentiator};
use crate::error::{Error, Result};
use crate::library::{polynomial_library, weak_polynomial_library, WeakConfig};
use crate::linalg::{LinearConstraints, Matrix, Vector};
use crate::rng::RngStream;
use crate::solver::{
    joint_problem, solve_sparse, support_of, unbias, BnbConfig, SolveStatus, SparseRegressionProblem,
    SparseSolution,
};
use crate::systems::{OdeSystem, Trajectory};

/// Smallest RSS used by [`aicc`]; clean data can fit to machine zero.
pub const RSS_FLOOR: f64 = 1e-300;

/// Noise level (percent) from which weak models are validated in weak form.
pub const WEAK_VALIDATION_NOISE: f64 = 15.0;

/// Window of the smoother used to validate weak models on low-noise data.
pub const VALIDATION_WINDOW: usize = 21;

/// `m ln(RSS/m) + 2k + 2(k+1)(k+2)/(m−k−2)`.
pub fn aicc(rss: f64, m: usize, k: usize) -> Result<f64> {
    aicc_flagged(rss, m, k).map(|(v, _)| v)
}

/// As [`aicc`], also reporting whether the RSS was floored.
pub fn aicc_flagged(rss: f64, m: usize, k: usize) -> Result<(f64, bool)> {
    if m <= k + 2 {
        return Err(Error::DegenerateSampleSize { m, k });
    }
    if !(rss >= 0.0) {
        return Err(Error::InvalidArgument(format!("residual sum of squares must be >= 0, got {rss}")));
    }
    let floored = rss < RSS_FLOOR;
    if floored {
        log::warn!("zero residual sum of squares floored at {RSS_FLOOR:e}");
    }
    let (mf, kf) = (m as f64, k as f64);
    let v = mf * (rss.max(RSS_FLOOR) / mf).ln() + 2.0 * kf + 2.0 * (kf + 1.0) * (kf + 2.0) / (mf - kf - 2.0);
    Ok((v, floored))
}

/// Regression algorithm together with its hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Algorithm {
    Miosr {
        ks: Vec<usize>,
        alphas: Vec<f64>,
    },
    Stlsq {
        thresholds: Vec<f64>,
        alphas: Vec<f64>,
    },
    Ssr {
        alphas: Vec<f64>,
    },
    #[serde(rename = "e-stlsq")]
    EStlsq {
        thresholds: Vec<f64>,
        alphas: Vec<f64>,
        #[serde(default = "default_models")]
        n_models: usize,
    },
}

fn default_models() -> usize {
    50
}

/// Ridge grid shared by every algorithm in the differential experiments.
pub const DEFAULT_ALPHAS: [f64; 6] = [0.0, 1e-5, 1e-3, 1e-2, 0.05, 0.2];

/// `count` values `base^a` with `a` evenly spaced on `[lo, hi]`.
pub fn log_grid(base: f64, lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![base.powf(lo)];
    }
    (0..count).map(|i| base.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)).collect()
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Miosr { .. } => "miosr",
            Algorithm::Stlsq { .. } => "stlsq",
            Algorithm::Ssr { .. } => "ssr",
            Algorithm::EStlsq { .. } => "e-stlsq",
        }
    }

    /// MIOSR with `k ∈ [1, 5]` per dimension and the default ridge grid.
    pub fn default_miosr() -> Self {
        Algorithm::Miosr { ks: (1..=5).collect(), alphas: DEFAULT_ALPHAS.to_vec() }
    }

    fn validate(&self) -> Result<()> {
        let empty = match self {
            Algorithm::Miosr { ks, alphas } => ks.is_empty() || alphas.is_empty(),
            Algorithm::Stlsq { thresholds, alphas } | Algorithm::EStlsq { thresholds, alphas, .. } => {
                thresholds.is_empty() || alphas.is_empty()
            }
            Algorithm::Ssr { alphas } => alphas.is_empty(),
        };
        if empty {
            return Err(Error::InvalidArgument(format!("{} grid is empty", self.label())));
        }
        Ok(())
    }

    /// Grid units in a fixed order; SSR expands each unit into its path.
    fn units(&self) -> Vec<GridPoint> {
        match self {
            Algorithm::Miosr { ks, alphas } => alphas
                .iter()
                .flat_map(|&alpha| ks.iter().map(move |&k| GridPoint { alpha, k: Some(k), threshold: None }))
                .collect(),
            Algorithm::Stlsq { thresholds, alphas } | Algorithm::EStlsq { thresholds, alphas, .. } => alphas
                .iter()
                .flat_map(|&alpha| {
                    thresholds.iter().map(move |&t| GridPoint { alpha, k: None, threshold: Some(t) })
                })
                .collect(),
            Algorithm::Ssr { alphas } => {
                alphas.iter().map(|&alpha| GridPoint { alpha, k: None, threshold: None }).collect()
            }
        }
    }
}

/// One hyperparameter setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub k: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub split_fraction: f64,
    /// Pick hyperparameters per target dimension; otherwise one global choice.
    pub dimensionwise: bool,
    /// Refit least squares on each selected support before scoring.
    pub unbias: bool,
    pub bnb: BnbConfig,
    /// Side constraints on the stacked coefficients; MIOSR then fits all
    /// dimensions jointly with a global sparsity budget.
    pub constraints: Option<LinearConstraints>,
    /// Seed of the ensemble resampling stream.
    pub seed: u64,
    /// Relative resolution of the targets: validation residuals with RMS
    /// below `residual_floor · rms(target)` are treated as equal, so models
    /// that only differ in fitting discretization error tie and the sparser
    /// one wins. Irrelevant once noise dominates the residual.
    pub residual_floor: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            split_fraction: 2.0 / 3.0,
            dimensionwise: true,
            unbias: true,
            bnb: BnbConfig::default(),
            constraints: None,
            seed: 0,
            residual_floor: 1e-3,
        }
    }
}

/// Train and validation regression data.
#[derive(Debug, Clone)]
pub struct FitData {
    pub theta_train: Matrix,
    pub y_train: Matrix,
    pub theta_val: Matrix,
    pub y_val: Matrix,
    /// Fit on unit-norm columns (coefficients are mapped back afterwards).
    pub normalize: bool,
}

/// How to turn a trajectory into regression data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub degree: usize,
    pub include_bias: bool,
    pub differentiator: Differentiator,
    pub weak: Option<WeakConfig>,
    pub split_fraction: f64,
}

fn differential_data(
    traj: &Trajectory,
    system: &OdeSystem,
    degree: usize,
    bias: bool,
    diff: Differentiator,
) -> Result<(Matrix, Matrix)> {
    let deriv = differentiate(traj, diff)?;
    let lib = polynomial_library(&smooth(traj, diff).select_columns(system.library_vars()), degree, bias);
    Ok((lib.theta, deriv.select_columns(system.target_vars())))
}

/// Split `traj` and build training / validation matrices.
///
/// Weak models are validated against a window-21 smoothed derivative below
/// [`WEAK_VALIDATION_NOISE`] percent noise and in weak form at or above it.
pub fn build_fit_data(traj: &Trajectory, system: &OdeSystem, spec: &DataSpec, noise_percent: f64) -> Result<FitData> {
    if !(spec.split_fraction > 0.0 && spec.split_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction must lie in (0, 1), got {}", spec.split_fraction)));
    }
    let (train, val) = traj.split(spec.split_fraction);
    let (lv, tv) = (system.library_vars(), system.target_vars());
    match &spec.weak {
        None => {
            let (theta_train, y_train) = differential_data(&train, system, spec.degree, spec.include_bias, spec.differentiator)?;
            let (theta_val, y_val) = differential_data(&val, system, spec.degree, spec.include_bias, spec.differentiator)?;
            Ok(FitData { theta_train, y_train, theta_val, y_val, normalize: false })
        }
        Some(weak) => {
            let lib = weak_polynomial_library(&train, lv, tv, spec.degree, spec.include_bias, weak)?;
            let (theta_val, y_val) = if noise_percent < WEAK_VALIDATION_NOISE {
                differential_data(
                    &val,
                    system,
                    spec.degree,
                    spec.include_bias,
                    Differentiator::Smoothed { window: VALIDATION_WINDOW },
                )?
            } else {
                let cfg = WeakConfig { seed: weak.seed.wrapping_add(1), ..weak.clone() };
                let v = weak_polynomial_library(&val, lv, tv, spec.degree, spec.include_bias, &cfg)?;
                (v.theta, v.targets)
            };
            Ok(FitData { theta_train: lib.theta, y_train: lib.targets, theta_val, y_val, normalize: true })
        }
    }
}

/// Per-solve bookkeeping of the exact solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub grid: GridPoint,
    /// Target dimension, `None` for joint solves.
    pub dim: Option<usize>,
    pub status: SolveStatus,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
}

/// Result of a grid search.
#[derive(Debug, Clone)]
pub struct Selection {
    /// `D × d` selected coefficients (unbiased when configured).
    pub coefficients: Matrix,
    /// Chosen grid point per dimension.
    pub chosen: Vec<GridPoint>,
    /// Validation AICc per dimension (global mode: the joint value, repeated).
    pub aicc: Vec<f64>,
    /// The regularized fits behind the selection, per dimension.
    pub solutions: Vec<SparseSolution>,
    pub solves: Vec<SolveRecord>,
    /// Total regression time over the grid, seconds.
    pub fit_time: f64,
}

struct Candidate {
    grid: GridPoint,
    /// Fitted coefficients in the original column scaling.
    xi: Matrix,
    solutions: Vec<SparseSolution>,
    solves: Vec<SolveRecord>,
}

fn column_scales(theta: &Matrix) -> Result<Vec<f64>> {
    theta
        .column_iter()
        .enumerate()
        .map(|(j, c)| {
            let n = c.norm();
            if n > 0.0 { Ok(n) } else { Err(Error::ZeroColumn(j)) }
        })
        .collect()
}

struct Prepared<'a> {
    theta: Matrix,
    y: &'a Matrix,
    gram: Matrix,
    linear: Matrix,
    constraints: Option<LinearConstraints>,
    bootstrap: Option<Bootstrap>,
}

fn record(grid: GridPoint, dim: Option<usize>, s: &SparseSolution) -> SolveRecord {
    SolveRecord { grid, dim, status: s.status, gap: s.gap, nodes: s.nodes_explored, wall_time: s.wall_time }
}

fn fit_unit(p: &Prepared, algo: &Algorithm, cfg: &SelectionConfig, grid: GridPoint) -> Result<Vec<Candidate>> {
    let (dl, d) = (p.theta.ncols(), p.y.ncols());
    let linear_col = |j: usize| p.linear.column(j).into_owned();
    let assemble = |sols: Vec<SparseSolution>, solves: Vec<SolveRecord>, grid: GridPoint| {
        let mut xi = Matrix::zeros(dl, d);
        for (j, s) in sols.iter().enumerate() {
            xi.set_column(j, &s.xi);
        }
        Candidate { grid, xi, solutions: sols, solves }
    };
    match algo {
        Algorithm::Miosr { .. } => {
            let k = grid.k.expect("MIOSR grid point carries k");
            if let Some(cons) = &p.constraints {
                let problem = joint_problem(&p.theta, p.y, grid.alpha, k.min(dl * d), Some(cons.clone()))?;
                let stacked = solve_sparse(&problem, &cfg.bnb)?;
                let solves = vec![record(grid, None, &stacked)];
                let joint = crate::solver::JointSolution {
                    coefficients: Matrix::from_column_slice(dl, d, stacked.xi.as_slice()),
                    stacked,
                };
                return Ok(vec![assemble(joint.per_dimension(&problem), solves, grid)]);
            }
            let mut sols = Vec::with_capacity(d);
            let mut solves = Vec::with_capacity(d);
            for j in 0..d {
                let problem = SparseRegressionProblem::new(p.gram.clone(), linear_col(j), grid.alpha, k.min(dl))?;
                let s = solve_sparse(&problem, &cfg.bnb)?;
                solves.push(record(grid, Some(j), &s));
                sols.push(s);
            }
            Ok(vec![assemble(sols, solves, grid)])
        }
        Algorithm::Stlsq { .. } => {
            let base = StlsqConfig::new(grid.threshold.expect("threshold"), grid.alpha);
            let sols = (0..d).map(|j| stlsq_gram(&p.gram, &linear_col(j), &base)).collect::<Result<Vec<_>>>()?;
            Ok(vec![assemble(sols, Vec::new(), grid)])
        }
        Algorithm::EStlsq { .. } => {
            let base = StlsqConfig::new(grid.threshold.expect("threshold"), grid.alpha);
            let boot = p.bootstrap.as_ref().expect("bootstrap prepared");
            let sols = (0..d)
                .map(|j| boot.fit(j, &base, Aggregation::Median, None).map(|f| f.solution))
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![assemble(sols, Vec::new(), grid)])
        }
        Algorithm::Ssr { .. } => {
            let paths = (0..d)
                .map(|j| ssr(&p.theta, &p.y.column(j).into_owned(), grid.alpha))
                .collect::<Result<Vec<_>>>()?;
            Ok((0..dl)
                .map(|level| {
                    let g = GridPoint { k: Some(dl - level), ..grid };
                    assemble(paths.iter().map(|path| path[level].clone()).collect(), Vec::new(), g)
                })
                .collect())
        }
    }
}

/// Evaluate every grid point and keep the AICc minimizer.
///
/// Candidates are scored on the validation split; ties go to the sparser
/// model, then to the earlier grid entry. Grid points that fail are skipped.
pub fn select_model(data: &FitData, algo: &Algorithm, cfg: &SelectionConfig) -> Result<Selection> {
    algo.validate()?;
    let start = std::time::Instant::now();
    let (dl, d) = (data.theta_train.ncols(), data.y_train.ncols());
    if data.theta_train.nrows() != data.y_train.nrows()
        || data.theta_val.nrows() != data.y_val.nrows()
        || data.theta_val.ncols() != dl
        || data.y_val.ncols() != d
    {
        return Err(Error::DimensionMismatch("train/validation matrices are inconsistent".into()));
    }
    let scales = if data.normalize { column_scales(&data.theta_train)? } else { vec![1.0; dl] };
    let mut theta = data.theta_train.clone();
    for (j, mut col) in theta.column_iter_mut().enumerate() {
        col /= scales[j];
    }
    // constraints act on original-scale coefficients: A ξ = A S⁻¹ (S ξ)
    let constraints = match (&cfg.constraints, algo) {
        (Some(c), Algorithm::Miosr { .. }) => {
            if c.ncols() != dl * d {
                return Err(Error::DimensionMismatch(format!(
                    "constraints act on {} coefficients, model has {}",
                    c.ncols(),
                    dl * d
                )));
            }
            let mut a = c.a.clone();
            for (j, mut col) in a.column_iter_mut().enumerate() {
                col /= scales[j % dl];
            }
            Some(LinearConstraints::new(a, c.b.clone(), c.senses.clone())?)
        }
        _ => None,
    };
    let joint = constraints.is_some();
    let bootstrap = match algo {
        Algorithm::EStlsq { n_models, .. } => {
            Some(Bootstrap::new(&theta, &data.y_train, *n_models, &mut RngStream::new(cfg.seed))?)
        }
        _ => None,
    };
    let prepared = Prepared {
        gram: theta.tr_mul(&theta),
        linear: theta.tr_mul(&data.y_train),
        theta,
        y: &data.y_train,
        constraints,
        bootstrap,
    };

    let units = algo.units();
    let fitted: Vec<Result<Vec<Candidate>>> =
        units.par_iter().map(|&g| fit_unit(&prepared, algo, cfg, g)).collect();
    let mut candidates = Vec::new();
    let mut first_err = None;
    for (g, r) in units.iter().zip(fitted) {
        match r {
            Ok(c) => candidates.extend(c),
            Err(e) => {
                log::warn!("grid point {g:?} skipped: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if candidates.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::InvalidArgument("empty grid".into())));
    }
    let fit_time = start.elapsed().as_secs_f64();

    // map back to original scale, unbias, score
    let m = data.theta_val.nrows();
    let floors: Vec<f64> =
        data.y_val.column_iter().map(|c| (cfg.residual_floor * c.norm()).powi(2)).collect();
    struct Scored {
        xi: Matrix,
        aicc: Vec<Option<f64>>,
        total: Option<f64>,
    }
    let scored: Vec<Scored> = candidates
        .par_iter_mut()
        .map(|c| {
            for j in 0..dl {
                c.xi.row_mut(j).unscale_mut(scales[j]);
            }
            for s in c.solutions.iter_mut() {
                for j in 0..dl {
                    s.xi[j] /= scales[j];
                }
            }
            let mut xi = c.xi.clone();
            if cfg.unbias && !joint {
                for j in 0..d {
                    let support = support_of(&xi.column(j).into_owned());
                    match unbias(&support, &data.theta_train, &data.y_train.column(j).into_owned()) {
                        Ok(u) => xi.set_column(j, &u),
                        Err(e) => log::debug!("unbiasing skipped for {:?}: {e}", c.grid),
                    }
                }
            }
            let resid = &data.y_val - &data.theta_val * &xi;
            let rss: Vec<f64> = (0..d).map(|j| resid.column(j).norm_squared().max(floors[j])).collect();
            let per_dim: Vec<Option<f64>> = (0..d)
                .map(|j| {
                    let k = xi.column(j).iter().filter(|v| **v != 0.0).count();
                    aicc(rss[j], m, k).ok()
                })
                .collect();
            let k_total = xi.iter().filter(|v| **v != 0.0).count();
            let total = aicc(rss.iter().sum(), m * d, k_total).ok();
            Scored { xi, aicc: per_dim, total }
        })
        .collect();

    let better = |a: (f64, usize, usize), b: (f64, usize, usize)| {
        a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
    };
    let nnz = |x: &Matrix, j: Option<usize>| match j {
        Some(j) => x.column(j).iter().filter(|v| **v != 0.0).count(),
        None => x.iter().filter(|v| **v != 0.0).count(),
    };
    let mut coefficients = Matrix::zeros(dl, d);
    let mut chosen = Vec::with_capacity(d);
    let mut best_aicc = Vec::with_capacity(d);
    let mut solutions = Vec::with_capacity(d);
    if cfg.dimensionwise && !joint {
        for j in 0..d {
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, s) in scored.iter().enumerate() {
                if let Some(a) = s.aicc[j] {
                    let key = (a, nnz(&s.xi, Some(j)), i);
                    if best.is_none_or(|b| better(key, b)) {
                        best = Some(key);
                    }
                }
            }
            let (a, _, i) = best.ok_or(Error::DegenerateSampleSize { m, k: dl })?;
            coefficients.set_column(j, &scored[i].xi.column(j));
            chosen.push(candidates[i].grid);
            best_aicc.push(a);
            solutions.push(candidates[i].solutions[j].clone());
        }
    } else {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, s) in scored.iter().enumerate() {
            if let Some(a) = s.total {
                let key = (a, nnz(&s.xi, None), i);
                if best.is_none_or(|b| better(key, b)) {
                    best = Some(key);
                }
            }
        }
        let (a, _, i) = best.ok_or(Error::DegenerateSampleSize { m: m * d, k: dl * d })?;
        coefficients = scored[i].xi.clone();
        chosen = vec![candidates[i].grid; d];
        best_aicc = vec![a; d];
        solutions = candidates[i].solutions.clone();
    }
    let solves = candidates.into_iter().flat_map(|c| c.solves).collect();
    Ok(Selection { coefficients, chosen, aicc: best_aicc, solutions, solves, fit_time })
}

/// Convenience: build the regression data from a (noisy) trajectory and run
/// the grid search.
pub fn select_model_for_trajectory(
    traj: &Trajectory,
    system: &OdeSystem,
    spec: &DataSpec,
    noise_percent: f64,
    algo: &Algorithm,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    let data = build_fit_data(traj, system, spec, noise_percent)?;
    select_model(&data, algo, cfg)
}

/// Residual sum of squares of `xi` on one target column (helper for tests
/// and reports).
pub fn rss(theta: &Matrix, y: &Vector, xi: &Vector) -> f64 {
    (y - theta * xi).norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{add_noise, rk4_integrate};

    #[test]
    fn aicc_examples() {
        assert!((aicc(100.0, 100, 2).unwrap() - 4.25).abs() < 1e-12);
        assert!((aicc(100.0, 100, 0).unwrap() - 4.0 / 98.0).abs() < 1e-12);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..20 {
            let v = aicc(5.0, 60, k).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(matches!(aicc(1.0, 4, 2), Err(Error::DegenerateSampleSize { m: 4, k: 2 })));
        let (v, flag) = aicc_flagged(0.0, 50, 1).unwrap();
        assert!(flag && v.is_finite());
    }

    #[test]
    fn aicc_ranking_invariant_to_rss_scaling() {
        let rs = [3.0, 1.0, 2.5];
        let ks = [1, 4, 2];
        let rank = |scale: f64| {
            let vals: Vec<f64> = rs.iter().zip(ks).map(|(r, k)| aicc(r * scale, 40, k).unwrap()).collect();
            (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap()
        };
        assert_eq!(rank(1.0), rank(1e6));
        assert_eq!(rank(1.0), rank(1e-6));
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(10.0, -2.0, 1.0, 50);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[49] - 10.0).abs() < 1e-12);
    }

    fn toy_data(seed: u64) -> FitData {
        let mut rng = RngStream::new(seed);
        let theta = Matrix::from_fn(90, 6, |_, _| rng.normal());
        let truth = Matrix::from_row_slice(6, 2, &[1.0, 0.0, 0.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5]);
        let y = &theta * &truth + Matrix::from_fn(90, 2, |_, _| 0.01 * rng.normal());
        FitData {
            theta_train: theta.rows(0, 60).into_owned(),
            y_train: y.rows(0, 60).into_owned(),
            theta_val: theta.rows(60, 30).into_owned(),
            y_val: y.rows(60, 30).into_owned(),
            normalize: false,
        }
    }

    #[test]
    fn single_grid_point_is_selected() {
        let data = toy_data(1);
        let algo = Algorithm::Miosr { ks: vec![3], alphas: vec![0.01] };
        let s = select_model(&data, &algo, &SelectionConfig::default()).unwrap();
        assert!(s.chosen.iter().all(|g| g.k == Some(3) && g.alpha == 0.01));
    }

    #[test]
    fn recovers_toy_supports() {
        let data = toy_data(2);
        for algo in [
            Algorithm::Miosr { ks: (1..=4).collect(), alphas: vec![0.0, 0.01] },
            Algorithm::Stlsq { thresholds: log_grid(10.0, -2.0, 0.0, 10), alphas: vec![0.0] },
            Algorithm::Ssr { alphas: vec![0.0] },
            Algorithm::EStlsq { thresholds: log_grid(10.0, -2.0, 0.0, 5), alphas: vec![0.0], n_models: 10 },
        ] {
            let s = select_model(&data, &algo, &SelectionConfig::default()).unwrap();
            assert_eq!(support_of(&s.coefficients.column(0).into_owned()), vec![0, 2], "{}", algo.label());
            assert_eq!(support_of(&s.coefficients.column(1).into_owned()), vec![1, 5], "{}", algo.label());
        }
    }

    #[test]
    fn worse_duplicate_does_not_change_selection() {
        let data = toy_data(3);
        let a = Algorithm::Miosr { ks: vec![1, 2, 3], alphas: vec![0.0] };
        let b = Algorithm::Miosr { ks: vec![1, 2, 3], alphas: vec![0.0, 0.0] };
        let cfg = SelectionConfig { unbias: false, ..Default::default() };
        let sa = select_model(&data, &a, &cfg).unwrap();
        let sb = select_model(&data, &b, &cfg).unwrap();
        assert_eq!(sa.coefficients, sb.coefficients);
        assert_eq!(sa.chosen, sb.chosen);
    }

    #[test]
    fn dimensionwise_equals_independent_selection() {
        let data = toy_data(4);
        let algo = Algorithm::Miosr { ks: (1..=4).collect(), alphas: vec![0.0, 0.05] };
        let both = select_model(&data, &algo, &SelectionConfig::default()).unwrap();
        for j in 0..2 {
            let single = FitData {
                y_train: data.y_train.columns(j, 1).into_owned(),
                y_val: data.y_val.columns(j, 1).into_owned(),
                ..data.clone()
            };
            let s = select_model(&single, &algo, &SelectionConfig::default()).unwrap();
            assert_eq!(s.coefficients.column(0), both.coefficients.column(j));
        }
    }

    #[test]
    fn normalization_is_transparent_for_exact_solver() {
        // best-subset with α = 0 is invariant to column scaling
        let mut data = toy_data(5);
        for (j, mut c) in data.theta_train.column_iter_mut().enumerate() {
            c *= 10f64.powi(j as i32 - 2);
        }
        for (j, mut c) in data.theta_val.column_iter_mut().enumerate() {
            c *= 10f64.powi(j as i32 - 2);
        }
        let algo = Algorithm::Miosr { ks: (1..=3).collect(), alphas: vec![0.0] };
        let raw = select_model(&data, &algo, &SelectionConfig::default()).unwrap();
        data.normalize = true;
        let normed = select_model(&data, &algo, &SelectionConfig::default()).unwrap();
        assert!((&raw.coefficients - &normed.coefficients).amax() <= 1e-8 * raw.coefficients.amax());
    }

    #[test]
    fn joint_constrained_selection_satisfies_constraints() {
        let data = toy_data(6);
        let mut a = Matrix::zeros(1, 12);
        a[(0, 0)] = 1.0;
        a[(0, 7)] = 1.0; // ξ⁽¹⁾₀ + ξ⁽²⁾₁ = −1
        let cons = LinearConstraints::equalities(a, Vector::from_vec(vec![-1.0])).unwrap();
        let cfg = SelectionConfig { constraints: Some(cons.clone()), unbias: false, ..Default::default() };
        let algo = Algorithm::Miosr { ks: (2..=6).collect(), alphas: vec![1e-3] };
        let s = select_model(&data, &algo, &cfg).unwrap();
        let stacked = Vector::from_iterator(12, s.coefficients.iter().copied());
        assert!(cons.max_violation(&stacked) <= 1e-9);
        assert!(s.solves.iter().all(|r| r.dim.is_none()));
    }

    #[test]
    fn clean_lorenz_picks_true_sparsities() {
        let sys = OdeSystem::lorenz(10.0, 8.0 / 3.0, 28.0);
        let traj = rk4_integrate(&sys, &Vector::from_vec(vec![-3.0, 4.0, 25.0]), 10.0, 0.002).unwrap();
        let spec = DataSpec {
            degree: 5,
            include_bias: true,
            differentiator: Differentiator::Centered,
            weak: None,
            split_fraction: 2.0 / 3.0,
        };
        let s = select_model_for_trajectory(&traj, &sys, &spec, 0.0, &Algorithm::default_miosr(), &Default::default())
            .unwrap();
        let sizes: Vec<usize> = (0..3).map(|j| support_of(&s.coefficients.column(j).into_owned()).len()).collect();
        assert_eq!(sizes, vec![2, 3, 2]);
    }

    #[test]
    fn weak_validation_switches_at_fifteen_percent() {
        let sys = OdeSystem::van_der_pol(3.0);
        let clean = rk4_integrate(&sys, &Vector::from_vec(vec![0.5, 1.0]), 12.0, 0.002).unwrap();
        let traj = add_noise(&clean, 1.0, &mut RngStream::new(1));
        let spec = DataSpec {
            degree: 3,
            include_bias: true,
            differentiator: Differentiator::Smoothed { window: 9 },
            weak: Some(WeakConfig::new(100, 200, 3)),
            split_fraction: 2.0 / 3.0,
        };
        let low = build_fit_data(&traj, &sys, &spec, 14.9).unwrap();
        let high = build_fit_data(&traj, &sys, &spec, 15.0).unwrap();
        // derivative validation has one row per sample; weak has one per domain
        assert_eq!(low.theta_val.nrows(), traj.len() - traj.split(spec.split_fraction).0.len());
        assert_eq!(high.theta_val.nrows(), 100);
        assert!(low.normalize && high.normalize);
    }
}
