//! Heuristic sparse regressors: STLSQ, SSR and bagged STLSQ.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{add_ridge, ridge_objective, solve_psd, Matrix, Vector};
use crate::rng::RngStream;
use crate::solver::SparseSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlsqConfig {
    pub threshold: f64,
    pub lambda: f64,
    pub max_iter: usize,
}

impl StlsqConfig {
    pub fn new(threshold: f64, lambda: f64) -> Self {
        Self { threshold, lambda, max_iter: 20 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidArgument(format!("threshold must be positive, got {}", self.threshold)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge weight must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Ridge fit restricted to `active`, zero elsewhere.
fn fit_on(g: &Matrix, c: &Vector, lambda: f64, active: &[usize]) -> Vector {
    let mut xi = Vector::zeros(c.len());
    if active.is_empty() {
        return xi;
    }
    let h = add_ridge(&g.select_rows(active).select_columns(active), lambda);
    let cs = Vector::from_iterator(active.len(), active.iter().map(|&i| c[i]));
    let local = solve_psd(&h, &cs).x;
    for (j, &i) in active.iter().enumerate() {
        xi[i] = local[j];
    }
    xi
}

fn check_data(theta: &Matrix, y: &Vector) -> Result<()> {
    if theta.ncols() == 0 {
        return Err(Error::InvalidArgument("library has no columns".into()));
    }
    if theta.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("library has {} rows, target {}", theta.nrows(), y.len())));
    }
    Ok(())
}

/// STLSQ on precomputed normal equations.
pub fn stlsq_gram(g: &Matrix, c: &Vector, cfg: &StlsqConfig) -> Result<SparseSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let mut active: Vec<usize> = (0..c.len()).collect();
    let mut xi = fit_on(g, c, cfg.lambda, &active);
    for _ in 0..cfg.max_iter {
        let next: Vec<usize> = active.iter().copied().filter(|&i| xi[i].abs() >= cfg.threshold).collect();
        if next == active {
            break;
        }
        active = next;
        xi = fit_on(g, c, cfg.lambda, &active);
    }
    let obj = ridge_objective(g, c, cfg.lambda, &xi);
    Ok(SparseSolution::heuristic(xi, obj, start.elapsed().as_secs_f64()))
}

/// Sequentially thresholded least squares. An empty model is a valid result.
pub fn stlsq(theta: &Matrix, y: &Vector, cfg: &StlsqConfig) -> Result<SparseSolution> {
    check_data(theta, y)?;
    stlsq_gram(&theta.tr_mul(theta), &theta.tr_mul(y), cfg)
}

/// Stepwise sparse regression: the backward-elimination path from the full
/// ridge fit down to one term. Entry `i` has `D − i` active terms.
pub fn ssr(theta: &Matrix, y: &Vector, lambda: f64) -> Result<Vec<SparseSolution>> {
    check_data(theta, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge weight must be >= 0, got {lambda}")));
    }
    let g = theta.tr_mul(theta);
    let c = theta.tr_mul(y);
    let mut active: Vec<usize> = (0..c.len()).collect();
    let mut path = Vec::with_capacity(c.len());
    loop {
        let start = Instant::now();
        let xi = fit_on(&g, &c, lambda, &active);
        let obj = ridge_objective(&g, &c, lambda, &xi);
        let mut sol = SparseSolution::heuristic(xi.clone(), obj, start.elapsed().as_secs_f64());
        // keep the level's nominal support even if a fitted coefficient is exactly zero
        sol.support = active.clone();
        path.push(sol);
        if active.len() == 1 {
            break;
        }
        let drop = active
            .iter()
            .copied()
            .min_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs()).then(a.cmp(&b)))
            .expect("active set is non-empty");
        active.retain(|&i| i != drop);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Median,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_models: usize,
    pub base: StlsqConfig,
    pub aggregation: Aggregation,
    /// Library-ensemble mode: keep the `k` terms with the highest inclusion
    /// probability and refit on them.
    pub top_k: Option<usize>,
}

impl EnsembleConfig {
    pub fn new(base: StlsqConfig) -> Self {
        Self { n_models: 50, base, aggregation: Aggregation::Median, top_k: None }
    }
}

/// Ensemble output with member-level detail.
#[derive(Debug, Clone)]
pub struct EnsembleFit {
    pub solution: SparseSolution,
    /// `D × n_models` member coefficients.
    pub members: Matrix,
    /// Fraction of members in which each term is nonzero.
    pub inclusion: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Normal equations of bootstrap resamples (whole rows, with replacement).
///
/// The resamples depend only on the data and the stream, so one set can be
/// shared by every threshold, ridge weight and target column of a grid search.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    /// Gram matrix of the full data.
    pub gram: Matrix,
    /// `D × d` linear terms of the full data.
    pub linear: Matrix,
    pub member_grams: Vec<Matrix>,
    pub member_linear: Vec<Matrix>,
}

impl Bootstrap {
    pub fn new(theta: &Matrix, targets: &Matrix, n_models: usize, rng: &mut RngStream) -> Result<Self> {
        if theta.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "library has {} rows, targets {}",
                theta.nrows(),
                targets.nrows()
            )));
        }
        if n_models < 2 {
            return Err(Error::InvalidArgument(format!("ensemble needs at least 2 models, got {n_models}")));
        }
        let m = theta.nrows();
        if m < 10 {
            return Err(Error::TooFewSamples { needed: 10, got: m });
        }
        let mut member_grams = Vec::with_capacity(n_models);
        let mut member_linear = Vec::with_capacity(n_models);
        for _ in 0..n_models {
            let mut counts = vec![0.0f64; m];
            for _ in 0..m {
                counts[rng.index(m)] += 1.0;
            }
            // weighted normal equations equal those of the resampled rows
            let mut weighted = theta.clone();
            let mut wy = targets.clone();
            for (i, &w) in counts.iter().enumerate() {
                let s = w.sqrt();
                weighted.row_mut(i).scale_mut(s);
                wy.row_mut(i).scale_mut(s);
            }
            member_grams.push(weighted.tr_mul(&weighted));
            member_linear.push(weighted.tr_mul(&wy));
        }
        Ok(Self { gram: theta.tr_mul(theta), linear: theta.tr_mul(targets), member_grams, member_linear })
    }

    pub fn n_models(&self) -> usize {
        self.member_grams.len()
    }

    /// Bagged STLSQ for target column `col`.
    pub fn fit(&self, col: usize, base: &StlsqConfig, aggregation: Aggregation, top_k: Option<usize>) -> Result<EnsembleFit> {
        base.validate()?;
        let start = Instant::now();
        let d = self.gram.nrows();
        let n_models = self.n_models();
        let mut members = Matrix::zeros(d, n_models);
        for b in 0..n_models {
            let c = self.member_linear[b].column(col).into_owned();
            let sol = stlsq_gram(&self.member_grams[b], &c, base)?;
            members.set_column(b, &sol.xi);
        }
        let inclusion: Vec<f64> = (0..d)
            .map(|i| members.row(i).iter().filter(|v| **v != 0.0).count() as f64 / n_models as f64)
            .collect();
        let c = self.linear.column(col).into_owned();
        let xi = match top_k {
            Some(k) => {
                let mut order: Vec<usize> = (0..d).filter(|&i| inclusion[i] > 0.0).collect();
                order.sort_by(|&a, &b| inclusion[b].total_cmp(&inclusion[a]).then(a.cmp(&b)));
                order.truncate(k);
                order.sort_unstable();
                fit_on(&self.gram, &c, base.lambda, &order)
            }
            None => Vector::from_fn(d, |i, _| {
                let mut row: Vec<f64> = members.row(i).iter().copied().collect();
                match aggregation {
                    Aggregation::Median => median(&mut row),
                }
            }),
        };
        let obj = ridge_objective(&self.gram, &c, base.lambda, &xi);
        Ok(EnsembleFit {
            solution: SparseSolution::heuristic(xi, obj, start.elapsed().as_secs_f64()),
            members,
            inclusion,
        })
    }
}

/// Bagged STLSQ: bootstrap whole rows, fit each resample, aggregate by the
/// entrywise median ("bragging").
pub fn ensemble_stlsq_detailed(
    theta: &Matrix,
    y: &Vector,
    cfg: &EnsembleConfig,
    rng: &mut RngStream,
) -> Result<EnsembleFit> {
    check_data(theta, y)?;
    cfg.base.validate()?;
    let targets = Matrix::from_column_slice(y.len(), 1, y.as_slice());
    let boot = Bootstrap::new(theta, &targets, cfg.n_models, rng)?;
    boot.fit(0, &cfg.base, cfg.aggregation, cfg.top_k)
}

pub fn ensemble_stlsq(theta: &Matrix, y: &Vector, cfg: &EnsembleConfig, rng: &mut RngStream) -> Result<SparseSolution> {
    ensemble_stlsq_detailed(theta, y, cfg, rng).map(|f| f.solution)
}
