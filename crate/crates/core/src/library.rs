//! Candidate libraries: polynomial features for ODEs, polynomial ×
//! derivative features for PDEs, and their weak (integral) forms.
//!
//! Column order is graded lexicographic: by total degree, then by variable
//! index, as produced by combinations-with-replacement of variable indices.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LinearConstraints, Matrix, Vector};
use crate::pde::{mixed_derivative, time_derivative, Field, PdeSystem};
use crate::rng::RngStream;
use crate::systems::Trajectory;

/// Exponent vectors of all monomials in `nvars` variables of total degree
/// `≤ degree` (degree 0 included when `include_bias`).
pub fn monomial_exponents(nvars: usize, degree: usize, include_bias: bool) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if include_bias {
        out.push(vec![0; nvars]);
    }
    for deg in 1..=degree {
        // nondecreasing index tuples of length `deg`, lexicographic
        let mut idx = vec![0usize; deg];
        loop {
            let mut e = vec![0u32; nvars];
            for &i in &idx {
                e[i] += 1;
            }
            out.push(e);
            let Some(pos) = (0..deg).rev().find(|&p| idx[p] + 1 < nvars) else { break };
            let v = idx[pos] + 1;
            for slot in idx.iter_mut().skip(pos) {
                *slot = v;
            }
        }
    }
    out
}

fn monomial_label(exps: &[u32], names: &[String]) -> String {
    let parts: Vec<String> = exps
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| if e == 1 { names[i].clone() } else { format!("{}^{e}", names[i]) })
        .collect();
    if parts.is_empty() { "1".into() } else { parts.join(" ") }
}

fn derivative_label(var: &str, orders: &[usize], axis_names: &[String]) -> String {
    let mut s = format!("{var}_");
    for (a, &o) in orders.iter().enumerate() {
        for _ in 0..o {
            s.push_str(&axis_names[a]);
        }
    }
    s
}

/// Spatial derivative factor `∂^orders u_var`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivativeSpec {
    pub var: usize,
    pub orders: Vec<usize>,
}

impl DerivativeSpec {
    pub fn total_order(&self) -> usize {
        self.orders.iter().sum()
    }
}

/// One library column: a monomial, optionally multiplied by a derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub derivative: Option<DerivativeSpec>,
    pub display: String,
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Polynomial features over a fixed set of variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialBasis {
    pub nvars: usize,
    pub degree: usize,
    pub include_bias: bool,
    exponents: Vec<Vec<u32>>,
}

impl PolynomialBasis {
    pub fn new(nvars: usize, degree: usize, include_bias: bool) -> Self {
        Self { nvars, degree, include_bias, exponents: monomial_exponents(nvars, degree, include_bias) }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn terms(&self, names: &[String]) -> Vec<Term> {
        self.exponents
            .iter()
            .map(|e| Term { exponents: e.clone(), derivative: None, display: monomial_label(e, names) })
            .collect()
    }

    /// `Θ(X)` for row-sample states `X` (`n × nvars`).
    pub fn evaluate(&self, states: &Matrix) -> Matrix {
        let n = states.nrows();
        let mut theta = Matrix::zeros(n, self.len());
        let mut row = vec![0.0; self.nvars];
        for i in 0..n {
            for (v, r) in row.iter_mut().enumerate() {
                *r = states[(i, v)];
            }
            for (j, e) in self.exponents.iter().enumerate() {
                theta[(i, j)] = eval_monomial(e, &row);
            }
        }
        theta
    }
}

#[inline]
fn eval_monomial(exps: &[u32], x: &[f64]) -> f64 {
    let mut p = 1.0;
    for (v, &e) in exps.iter().enumerate() {
        if e > 0 {
            p *= x[v].powi(e as i32);
        }
    }
    p
}

/// Feature matrix `Θ` with targets and the column scaling applied to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLibrary {
    pub terms: Vec<Term>,
    /// `n × D`.
    pub theta: Matrix,
    /// `n × d`.
    pub targets: Matrix,
    pub target_names: Vec<String>,
    /// Factor each original column was divided by (1 when unnormalized).
    pub scales: Vec<f64>,
}

impl CandidateLibrary {
    pub fn new(terms: Vec<Term>, theta: Matrix, targets: Matrix, target_names: Vec<String>) -> Result<Self> {
        if terms.len() != theta.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} terms for {} columns",
                terms.len(),
                theta.ncols()
            )));
        }
        if targets.nrows() != theta.nrows() || target_names.len() != targets.ncols() {
            return Err(Error::DimensionMismatch("targets do not match library rows".into()));
        }
        let scales = vec![1.0; terms.len()];
        Ok(Self { terms, theta, targets, target_names, scales })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.display.clone()).collect()
    }

    /// Replace the targets, e.g. with measured derivatives.
    pub fn with_targets(mut self, targets: Matrix, names: Vec<String>) -> Result<Self> {
        if targets.nrows() != self.theta.nrows() || names.len() != targets.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "targets {}x{} for a library with {} rows",
                targets.nrows(),
                targets.ncols(),
                self.theta.nrows()
            )));
        }
        self.targets = targets;
        self.target_names = names;
        Ok(self)
    }

    /// Map coefficients fitted on the (possibly normalized) columns back to
    /// original units.
    pub fn denormalize(&self, xi: &Matrix) -> Matrix {
        let mut out = xi.clone();
        for (j, s) in self.scales.iter().enumerate() {
            out.row_mut(j).unscale_mut(*s);
        }
        out
    }

    /// CSV with the term labels (then target names) as header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.labels();
        header.extend(self.target_names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for i in 0..self.nrows() {
            let row: Vec<String> = self
                .theta
                .row(i)
                .iter()
                .chain(self.targets.row(i).iter())
                .map(|v| format!("{v:.16e}"))
                .collect();
            w.write_record(&row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn default_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// All monomials of total degree `≤ degree` in the trajectory's state
/// columns. Targets are left empty; attach derivatives with
/// [`CandidateLibrary::with_targets`].
pub fn polynomial_library(traj: &Trajectory, degree: usize, include_bias: bool) -> CandidateLibrary {
    let basis = PolynomialBasis::new(traj.dim(), degree.max(1), include_bias);
    let theta = basis.evaluate(&traj.states);
    let terms = basis.terms(&default_names("x", traj.dim()));
    CandidateLibrary::new(terms, theta, Matrix::zeros(traj.len(), 0), Vec::new())
        .expect("basis and evaluation agree")
}

/// Structure of a PDE library: which monomials and which derivative factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeLibraryLayout {
    pub terms: Vec<Term>,
    /// Distinct derivative factors, in the order they appear among `terms`.
    pub derivatives: Vec<DerivativeSpec>,
}

/// Derivative multi-indices over `naxes` axes with total order `order`, the
/// first axis varying slowest (`xx, xy, yy`).
fn multi_indices(naxes: usize, order: usize) -> Vec<Vec<usize>> {
    if naxes == 1 {
        return vec![vec![order]];
    }
    let mut out = Vec::new();
    for first in (0..=order).rev() {
        for mut rest in multi_indices(naxes - 1, order - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// Library layout `{monomials} ∪ {derivatives} ∪ {monomials × derivatives}`,
/// monomials of degree `1..=degree` (no constant) in all variables and
/// derivative factors of every variable up to total order `max_deriv`.
///
/// One variable, degree 3, order 4 gives 3 + 4 + 12 = 19 columns; two
/// variables on a plane with degree 3, order 2 give 9 + 10 + 90 = 109.
pub fn pde_layout(var_names: &[String], axis_names: &[String], degree: usize, max_deriv: usize) -> PdeLibraryLayout {
    let nvars = var_names.len();
    let monos = monomial_exponents(nvars, degree, false);
    let mut derivs = Vec::new();
    for var in 0..nvars {
        for order in 1..=max_deriv {
            for orders in multi_indices(axis_names.len(), order) {
                derivs.push(DerivativeSpec { var, orders });
            }
        }
    }
    let mut terms: Vec<Term> = monos
        .iter()
        .map(|e| Term { exponents: e.clone(), derivative: None, display: monomial_label(e, var_names) })
        .collect();
    for d in &derivs {
        terms.push(Term {
            exponents: vec![0; nvars],
            derivative: Some(d.clone()),
            display: derivative_label(&var_names[d.var], &d.orders, axis_names),
        });
    }
    for e in &monos {
        for d in &derivs {
            terms.push(Term {
                exponents: e.clone(),
                derivative: Some(d.clone()),
                display: format!(
                    "{} {}",
                    monomial_label(e, var_names),
                    derivative_label(&var_names[d.var], &d.orders, axis_names)
                ),
            });
        }
    }
    PdeLibraryLayout { terms, derivatives: derivs }
}

/// `D × d` true coefficients of a benchmark PDE in the layout of
/// [`pde_layout`] (as produced by [`pde_library`] / [`weak_pde_library`]).
pub fn pde_true_coefficients(system: PdeSystem, degree: usize, max_deriv: usize) -> Result<Matrix> {
    let vars = system.variables();
    let layout = pde_layout(&vars, &system.axes(), degree, max_deriv);
    let mut xi = Matrix::zeros(layout.terms.len(), vars.len());
    for t in system.true_terms() {
        let deriv = t.derivative.as_ref().map(|(var, orders)| DerivativeSpec { var: *var, orders: orders.clone() });
        let row = layout
            .terms
            .iter()
            .position(|term| term.exponents == t.exponents && term.derivative == deriv)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "degree {degree} / order {max_deriv} library lacks a true term of {}",
                    system.name()
                ))
            })?;
        xi[(row, t.target)] = t.coef;
    }
    Ok(xi)
}

fn field_layout(field: &Field, degree: usize, max_deriv: usize) -> PdeLibraryLayout {
    let axis_names: Vec<String> = field.axes.iter().map(|a| a.name.clone()).collect();
    pde_layout(&field.variables, &axis_names, degree, max_deriv)
}

fn derivative_fields(field: &Field, layout: &PdeLibraryLayout) -> Result<Vec<Vec<f64>>> {
    layout
        .derivatives
        .iter()
        .map(|d| Ok(mixed_derivative(&field.variable(d.var), &d.orders)?.values))
        .collect()
}

/// Differential-form PDE library over every space-time sample; targets are
/// the time derivatives `u_t` of each variable.
pub fn pde_library(field: &Field, degree: usize, max_deriv: usize) -> Result<CandidateLibrary> {
    if degree == 0 || max_deriv == 0 {
        return Err(Error::InvalidArgument("PDE library needs degree >= 1 and max_deriv >= 1".into()));
    }
    let layout = field_layout(field, degree, max_deriv);
    let dfields = derivative_fields(field, &layout)?;
    let ut = time_derivative(field)?;
    let nv = field.nvars();
    let rows = field.nt() * field.npoints();
    let mut theta = Matrix::zeros(rows, layout.terms.len());
    let mut targets = Matrix::zeros(rows, nv);
    let mut state = vec![0.0; nv];
    for r in 0..rows {
        for (v, s) in state.iter_mut().enumerate() {
            *s = field.values[r * nv + v];
        }
        for (j, t) in layout.terms.iter().enumerate() {
            let mut val = eval_monomial(&t.exponents, &state);
            if let Some(d) = &t.derivative {
                let di = layout.derivatives.iter().position(|x| x == d).expect("layout derivative");
                val *= dfields[di][r];
            }
            theta[(r, j)] = val;
        }
        for v in 0..nv {
            targets[(r, v)] = ut.values[r * nv + v];
        }
    }
    let names = field.variables.iter().map(|v| format!("{v}_t")).collect();
    CandidateLibrary::new(layout.terms, theta, targets, names)
}

/// Divide every column by its 2-norm, recording the factors.
pub fn normalize_columns(lib: &CandidateLibrary) -> Result<CandidateLibrary> {
    let mut out = lib.clone();
    for j in 0..out.theta.ncols() {
        let norm = out.theta.column(j).norm();
        if !(norm > 0.0) {
            return Err(Error::ZeroColumn(j));
        }
        out.theta.column_mut(j).unscale_mut(norm);
        out.scales[j] *= norm;
    }
    Ok(out)
}

/// Weak-form settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakConfig {
    /// Number of random subdomains `K`.
    pub num_domains: usize,
    /// Quadrature points per subdomain. For PDEs this is the total over the
    /// space-time box (its integer root per axis) unless `per_axis` is set.
    pub points_per_domain: usize,
    /// PDE boxes get `points_per_domain` points along every axis.
    #[serde(default)]
    pub per_axis: bool,
    /// Exponent `p` of the test function `(τ² − 1)^p`; `None` picks
    /// `max(max derivative order + 1, 4)`.
    pub test_power: Option<u32>,
    /// Seed for the subdomain positions.
    pub seed: u64,
}

impl WeakConfig {
    pub fn new(num_domains: usize, points_per_domain: usize, seed: u64) -> Self {
        Self { num_domains, points_per_domain, per_axis: false, test_power: None, seed }
    }

    /// Same settings with `points_per_domain` counted per axis.
    pub fn per_axis(self) -> Self {
        Self { per_axis: true, ..self }
    }

    fn power(&self, max_order: usize) -> u32 {
        self.test_power.unwrap_or_else(|| (max_order as u32 + 1).max(4))
    }

    fn validate(&self, max_order: usize) -> Result<()> {
        if self.num_domains == 0 {
            return Err(Error::InvalidArgument("weak form needs at least one domain".into()));
        }
        if self.points_per_domain < 5 {
            return Err(Error::InvalidArgument("weak form needs at least 5 points per domain".into()));
        }
        if (self.power(max_order) as usize) < max_order + 1 {
            return Err(Error::InvalidArgument(format!(
                "test function power must be at least {} for derivative order {max_order}",
                max_order + 1
            )));
        }
        Ok(())
    }
}

/// Test function `φ(τ) = (τ² − 1)^p` on `[−1, 1]` and its derivatives.
#[derive(Debug, Clone)]
struct TestPolynomial {
    /// `derivs[r]` holds the coefficients (ascending powers) of `φ^{(r)}`.
    derivs: Vec<Vec<f64>>,
}

impl TestPolynomial {
    fn new(p: u32, max_order: usize) -> Self {
        let p = p as usize;
        let mut coeffs = vec![0.0; 2 * p + 1];
        let mut binom = 1.0;
        for k in 0..=p {
            // C(p, k) τ^{2k} (−1)^{p−k}
            coeffs[2 * k] = binom * if (p - k).is_multiple_of(2) { 1.0 } else { -1.0 };
            binom = binom * (p - k) as f64 / (k + 1) as f64;
        }
        let mut derivs = vec![coeffs];
        for r in 1..=max_order {
            let prev = &derivs[r - 1];
            let next: Vec<f64> = (1..prev.len()).map(|i| prev[i] * i as f64).collect();
            derivs.push(if next.is_empty() { vec![0.0] } else { next });
        }
        Self { derivs }
    }

    fn eval(&self, order: usize, tau: f64) -> f64 {
        self.derivs[order].iter().rev().fold(0.0, |acc, c| acc * tau + c)
    }

    /// Samples of `d^r φ / dx^r` on `m` uniform points spanning a physical
    /// interval of length `(m − 1) h`, including the trapezoid weight `h`
    /// (end weights are irrelevant since `φ` and its first `p − 1`
    /// derivatives vanish there).
    fn weighted_samples(&self, order: usize, m: usize, h: f64) -> Vec<f64> {
        let jac = 2.0 / ((m - 1) as f64 * h);
        (0..m)
            .map(|i| {
                let tau = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
                let w = if i == 0 || i == m - 1 { 0.5 * h } else { h };
                w * self.eval(order, tau) * jac.powi(order as i32)
            })
            .collect()
    }
}

/// Weak-form ODE library.
///
/// Each of the `K` subdomains spans `points_per_domain` consecutive samples
/// at a uniformly random offset. Row `k` of the returned `Θ` holds
/// `∫ φ_k θ_i dt`, the targets hold `−∫ φ_k′ x dt` for each column of
/// `target_vars`; the monomials are built from `library_vars`.
pub fn weak_polynomial_library(
    traj: &Trajectory,
    library_vars: &[usize],
    target_vars: &[usize],
    degree: usize,
    include_bias: bool,
    cfg: &WeakConfig,
) -> Result<CandidateLibrary> {
    cfg.validate(1)?;
    let n = traj.len();
    let m = cfg.points_per_domain;
    if n < m {
        return Err(Error::DomainTooSmall(format!(
            "{m} points per domain but the trajectory has {n} samples"
        )));
    }
    let basis = PolynomialBasis::new(library_vars.len(), degree.max(1), include_bias);
    let full = basis.evaluate(&traj.states.select_columns(library_vars));
    let poly = TestPolynomial::new(cfg.power(1), 1);
    let w0 = poly.weighted_samples(0, m, traj.dt);
    let w1 = poly.weighted_samples(1, m, traj.dt);
    let mut rng = RngStream::new(cfg.seed);
    let k = cfg.num_domains;
    let mut theta = Matrix::zeros(k, basis.len());
    let mut targets = Matrix::zeros(k, target_vars.len());
    for row in 0..k {
        let start = rng.index(n - m + 1);
        for i in 0..m {
            let s = start + i;
            for j in 0..basis.len() {
                theta[(row, j)] += w0[i] * full[(s, j)];
            }
            for (c, &v) in target_vars.iter().enumerate() {
                targets[(row, c)] -= w1[i] * traj.states[(s, v)];
            }
        }
    }
    let names = library_vars.iter().map(|v| format!("x{v}")).collect::<Vec<_>>();
    let target_names = target_vars.iter().map(|v| format!("x{v}_t")).collect();
    CandidateLibrary::new(basis.terms(&names), theta, targets, target_names)
}

/// Per-axis quadrature point count for a `dims`-dimensional box: the integer
/// `dims`-th root of `points`.
pub fn points_per_axis(points: usize, dims: usize) -> usize {
    let mut m = (points as f64).powf(1.0 / dims as f64).round() as usize;
    while m > 1 && m.pow(dims as u32) > points {
        m -= 1;
    }
    while (m + 1).pow(dims as u32) <= points {
        m += 1;
    }
    m
}

/// Weak-form PDE library over random space-time boxes.
///
/// Pure derivative columns move every derivative onto the test function
/// (`(−1)^{|α|} ∫ ∂^α φ u`); `u^e u_x`-type columns are integrated by parts
/// once through `u^{e+1}/(e+1)`; the remaining products are integrated
/// directly against spectral derivatives of the data.
pub fn weak_pde_library(field: &Field, degree: usize, max_deriv: usize, cfg: &WeakConfig) -> Result<CandidateLibrary> {
    if degree == 0 || max_deriv == 0 {
        return Err(Error::InvalidArgument("PDE library needs degree >= 1 and max_deriv >= 1".into()));
    }
    cfg.validate(max_deriv)?;
    let layout = field_layout(field, degree, max_deriv);
    let ns = field.axes.len();
    let dims = ns + 1;
    let m = if cfg.per_axis { cfg.points_per_domain } else { points_per_axis(cfg.points_per_domain, dims) };
    if m < 3 {
        return Err(Error::DomainTooSmall(format!(
            "{} points per domain give only {m} points per axis",
            cfg.points_per_domain
        )));
    }
    let mut extents = vec![field.nt()];
    extents.extend(field.axes.iter().map(|a| a.len));
    if extents.iter().any(|&e| e < m) {
        return Err(Error::DomainTooSmall(format!("box of {m} points per axis exceeds the grid {extents:?}")));
    }
    let spacing: Vec<f64> = std::iter::once(field.dt()).chain(field.axes.iter().map(|a| a.spacing)).collect();
    let poly = TestPolynomial::new(cfg.power(max_deriv), max_deriv);
    // samples[axis][order]
    let samples: Vec<Vec<Vec<f64>>> = spacing
        .iter()
        .map(|&h| (0..=max_deriv).map(|r| poly.weighted_samples(r, m, h)).collect())
        .collect();
    let dfields = derivative_fields(field, &layout)?;
    let nv = field.nvars();
    let npts = field.npoints();
    let strides: Vec<usize> = (0..ns).map(|a| field.axes[a + 1..].iter().map(|x| x.len).product()).collect();

    let mut rng = RngStream::new(cfg.seed);
    let k = cfg.num_domains;
    let mut theta = Matrix::zeros(k, layout.terms.len());
    let mut targets = Matrix::zeros(k, nv);
    let box_size = m.pow(dims as u32);
    let mut state = vec![0.0; nv];
    let mut local = vec![0usize; dims];
    for row in 0..k {
        let starts: Vec<usize> = extents.iter().map(|&e| rng.index(e - m + 1)).collect();
        for flat in 0..box_size {
            let mut rem = flat;
            for d in (0..dims).rev() {
                local[d] = rem % m;
                rem /= m;
            }
            let t = starts[0] + local[0];
            let mut point = 0;
            for a in 0..ns {
                point += (starts[a + 1] + local[a + 1]) * strides[a];
            }
            let r = t * npts + point;
            for (v, s) in state.iter_mut().enumerate() {
                *s = field.values[r * nv + v];
            }
            // test function weight with derivative orders per axis
            let weight = |orders: &[usize]| -> f64 {
                let mut w = 1.0;
                for d in 0..dims {
                    w *= samples[d][orders[d]][local[d]];
                }
                w
            };
            let zero = vec![0usize; dims];
            let phi = weight(&zero);
            let mut dt_orders = zero.clone();
            dt_orders[0] = 1;
            let phi_t = weight(&dt_orders);
            for v in 0..nv {
                targets[(row, v)] -= phi_t * state[v];
            }
            for (j, term) in layout.terms.iter().enumerate() {
                let mono = eval_monomial(&term.exponents, &state);
                let val = match &term.derivative {
                    None => phi * mono,
                    Some(d) => {
                        let mut orders = vec![0usize];
                        orders.extend(d.orders.iter().copied());
                        let single_var_power = term
                            .exponents
                            .iter()
                            .enumerate()
                            .all(|(i, &e)| i == d.var || e == 0);
                        if term.degree() == 0 {
                            let sign = if d.total_order() % 2 == 0 { 1.0 } else { -1.0 };
                            sign * weight(&orders) * state[d.var]
                        } else if d.total_order() == 1 && single_var_power {
                            // u^e u_x = (u^{e+1} / (e + 1))_x
                            let e = term.exponents[d.var] as i32;
                            -weight(&orders) * state[d.var].powi(e + 1) / (e + 1) as f64
                        } else {
                            let di = layout.derivatives.iter().position(|x| x == d).expect("layout derivative");
                            phi * mono * dfields[di][r]
                        }
                    }
                };
                theta[(row, j)] += val;
            }
        }
    }
    let names = field.variables.iter().map(|v| format!("{v}_t")).collect();
    CandidateLibrary::new(layout.terms, theta, targets, names)
}

/// Equalities forcing a planar polynomial force field `(f, g)` to be a
/// gradient field (`∂f/∂y = ∂g/∂x`), as for `Ẋ = −∂V/∂x`, `Ẏ = −∂V/∂y`.
///
/// Acts on the stacked coefficients `[ξ_f; ξ_g]` of a two-variable
/// polynomial library. One row per monomial `xᵖ yᑫ` with `p + q < degree`:
/// `(q+1)·f[p, q+1] − (p+1)·g[p+1, q] = 0`.
pub fn curl_free_constraints(degree: usize, include_bias: bool) -> Result<LinearConstraints> {
    let exps = monomial_exponents(2, degree, include_bias);
    let d = exps.len();
    let index = |p: u32, q: u32| exps.iter().position(|e| e[0] == p && e[1] == q).expect("monomial in basis");
    let mut rows = Vec::new();
    for total in 0..degree as u32 {
        for p in (0..=total).rev() {
            let q = total - p;
            let mut row = vec![0.0; 2 * d];
            row[index(p, q + 1)] = (q + 1) as f64;
            row[d + index(p + 1, q)] = -((p + 1) as f64);
            rows.push(row);
        }
    }
    let a = Matrix::from_fn(rows.len(), 2 * d, |i, j| rows[i][j]);
    let m = rows.len();
    LinearConstraints::equalities(a, Vector::zeros(m))
}
