//! Dense linear algebra used throughout the crate: ridge solves on Gram
//! matrices, equality/inequality constrained quadratic minimization and a
//! rank-revealing (diagonally pivoted) Cholesky factorization.
//!
//! Every quadratic here has the form `f(ξ) = ξᵀHξ − 2⟨c, ξ⟩` where `H` is
//! symmetric positive semidefinite. Solves are Jacobi-equilibrated before
//! factoring; the equilibration does not change the minimizer but keeps the
//! factorization usable for polynomial libraries whose columns differ by many
//! orders of magnitude.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest condition estimate accepted for an unregularized solve.
pub const CONDITION_LIMIT: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-10;
const RANK_TOL: f64 = 1e-13;

/// Sense of one row of a linear side constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintSense {
    Eq,
    Le,
}

/// Linear side constraints `A ξ (= | ≤) b`, one sense per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    pub a: Matrix,
    pub b: Vector,
    pub senses: Vec<ConstraintSense>,
}

impl LinearConstraints {
    pub fn new(a: Matrix, b: Vector, senses: Vec<ConstraintSense>) -> Result<Self> {
        if a.nrows() != b.len() || a.nrows() != senses.len() {
            return Err(Error::DimensionMismatch(format!(
                "constraint matrix has {} rows, rhs {} entries, {} senses",
                a.nrows(),
                b.len(),
                senses.len()
            )));
        }
        Ok(Self { a, b, senses })
    }

    pub fn equalities(a: Matrix, b: Vector) -> Result<Self> {
        let m = a.nrows();
        Self::new(a, b, vec![ConstraintSense::Eq; m])
    }

    pub fn empty(ncols: usize) -> Self {
        Self { a: Matrix::zeros(0, ncols), b: Vector::zeros(0), senses: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.a.nrows() == 0
    }

    /// Restrict the constraints to a subset of columns (variables outside the
    /// subset are fixed at zero).
    pub fn restrict(&self, cols: &[usize]) -> Self {
        Self { a: self.a.select_columns(cols), b: self.b.clone(), senses: self.senses.clone() }
    }

    /// Largest violation of any row at `x`.
    pub fn max_violation(&self, x: &Vector) -> f64 {
        let r = &self.a * x - &self.b;
        r.iter()
            .zip(&self.senses)
            .map(|(v, s)| match s {
                ConstraintSense::Eq => v.abs(),
                ConstraintSense::Le => v.max(0.0),
            })
            .fold(0.0, f64::max)
    }

    /// Mean absolute violation `(1/c)‖Aξ − b‖₁` over equality rows (inequality
    /// rows contribute their positive part).
    pub fn mean_violation(&self, x: &Vector) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let r = &self.a * x - &self.b;
        let total: f64 = r
            .iter()
            .zip(&self.senses)
            .map(|(v, s)| match s {
                ConstraintSense::Eq => v.abs(),
                ConstraintSense::Le => v.max(0.0),
            })
            .sum();
        total / self.nrows() as f64
    }
}

/// `ξᵀHξ − 2⟨c, ξ⟩`.
pub fn quadratic_objective(h: &Matrix, c: &Vector, x: &Vector) -> f64 {
    x.dot(&(h * x)) - 2.0 * c.dot(x)
}

/// `ξᵀ(G + λI)ξ − 2⟨c, ξ⟩` without materializing `G + λI`.
pub fn ridge_objective(g: &Matrix, c: &Vector, lambda: f64, x: &Vector) -> f64 {
    x.dot(&(g * x)) + lambda * x.norm_squared() - 2.0 * c.dot(x)
}

pub(crate) fn add_ridge(g: &Matrix, lambda: f64) -> Matrix {
    let mut h = g.clone();
    for i in 0..h.nrows() {
        h[(i, i)] += lambda;
    }
    h
}

fn check_symmetric(g: &Matrix) -> Result<()> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Gram matrix must be square, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let scale = g.amax().max(1.0);
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            if (g[(i, j)] - g[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!(
                    "Gram matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Cholesky factorization with diagonal pivoting, `Pᵀ H P ≈ L Lᵀ`, stopped as
/// soon as the largest remaining pivot drops below `tol · max(diag H)`.
#[derive(Debug, Clone)]
pub struct PivotedCholesky {
    /// Lower-trapezoidal factor in permuted order, `n × rank`.
    l: Matrix,
    /// `perm[j]` is the original index placed at position `j`.
    perm: Vec<usize>,
    rank: usize,
    /// Accepted pivots in factorization order (non-increasing up to rounding).
    pivots: Vec<f64>,
}

impl PivotedCholesky {
    pub fn new(h: &Matrix, tol: f64) -> Self {
        let n = h.nrows();
        let mut work = h.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut l = Matrix::zeros(n, n);
        let max_diag = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
        let mut pivots = Vec::with_capacity(n);
        let mut rank = 0;
        for j in 0..n {
            // remaining diagonal of the Schur complement
            let (p, best) = (j..n)
                .map(|i| (i, work[(i, i)]))
                .fold((j, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
            if !(best > tol * max_diag) || best <= 0.0 {
                break;
            }
            if p != j {
                work.swap_rows(j, p);
                work.swap_columns(j, p);
                l.swap_rows(j, p);
                perm.swap(j, p);
            }
            let d = work[(j, j)].sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                l[(i, j)] = work[(i, j)] / d;
            }
            for i in (j + 1)..n {
                let lij = l[(i, j)];
                if lij == 0.0 {
                    continue;
                }
                for k in (j + 1)..=i {
                    let v = work[(i, k)] - lij * l[(k, j)];
                    work[(i, k)] = v;
                    work[(k, i)] = v;
                }
            }
            pivots.push(best);
            rank = j + 1;
        }
        Self { l: l.columns(0, rank).into_owned(), perm, rank, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.perm.len()
    }

    /// Ratio of largest to smallest accepted pivot.
    pub fn condition_estimate(&self) -> f64 {
        match (self.pivots.first(), self.pivots.last()) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }

    /// Minimizer of `xᵀHx − 2⟨c, x⟩` restricted to the pivoted columns; the
    /// remaining coordinates are zero. Exact whenever `c` lies in the range of
    /// `H` and the truncated Schur complement is numerically zero.
    pub fn solve(&self, c: &Vector) -> Vector {
        let r = self.rank;
        let mut y = Vector::zeros(r);
        for j in 0..r {
            let mut s = c[self.perm[j]];
            for k in 0..j {
                s -= self.l[(j, k)] * y[k];
            }
            y[j] = s / self.l[(j, j)];
        }
        for j in (0..r).rev() {
            let mut s = y[j];
            for k in (j + 1)..r {
                s -= self.l[(k, j)] * y[k];
            }
            y[j] = s / self.l[(j, j)];
        }
        let mut x = Vector::zeros(self.perm.len());
        for j in 0..r {
            x[self.perm[j]] = y[j];
        }
        x
    }
}

/// Result of an equilibrated PSD solve.
#[derive(Debug, Clone)]
pub(crate) struct PsdSolve {
    pub x: Vector,
    pub rank: usize,
    pub condition: f64,
}

/// Minimize `xᵀHx − 2⟨c, x⟩` for symmetric PSD `H`, tolerating rank
/// deficiency (the minimizer then has zeros on the dropped pivots).
pub(crate) fn solve_psd(h: &Matrix, c: &Vector) -> PsdSolve {
    let n = h.nrows();
    if n == 0 {
        return PsdSolve { x: Vector::zeros(0), rank: 0, condition: 1.0 };
    }
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = h[(i, i)];
            if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }
        })
        .collect();
    let hs = Matrix::from_fn(n, n, |i, j| h[(i, j)] * scale[i] * scale[j]);
    let cs = Vector::from_fn(n, |i, _| c[i] * scale[i]);

    if let Some(chol) = hs.clone().cholesky() {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            lo = lo.min(l[(i, i)].abs());
            hi = hi.max(l[(i, i)].abs());
        }
        let condition = (hi / lo).powi(2);
        if condition < CONDITION_LIMIT {
            let y = chol.solve(&cs);
            return PsdSolve { x: y.component_mul(&Vector::from_vec(scale)), rank: n, condition };
        }
    }
    let pc = PivotedCholesky::new(&hs, RANK_TOL);
    let y = pc.solve(&cs);
    PsdSolve {
        x: y.component_mul(&Vector::from_vec(scale)),
        rank: pc.rank(),
        condition: if pc.is_full_rank() { pc.condition_estimate() } else { f64::INFINITY },
    }
}

/// Solve `min ξᵀ(G + λI)ξ − 2⟨c, ξ⟩`, i.e. `ξ* = (G + λI)⁻¹ c`.
///
/// Cholesky on the equilibrated system, falling back to a diagonally pivoted
/// factorization. With `lambda == 0` a condition estimate above
/// [`CONDITION_LIMIT`] is reported as [`Error::SingularSystem`].
pub fn ridge_solve(g: &Matrix, c: &Vector, lambda: f64) -> Result<Vector> {
    check_symmetric(g)?;
    if c.len() != g.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Gram is {}x{} but linear term has {} entries",
            g.nrows(),
            g.ncols(),
            c.len()
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge weight must be >= 0, got {lambda}")));
    }
    let h = add_ridge(g, lambda);
    let sol = solve_psd(&h, c);
    if sol.rank < g.nrows() || (lambda == 0.0 && sol.condition > CONDITION_LIMIT) {
        return Err(Error::SingularSystem { condition: sol.condition });
    }
    Ok(sol.x)
}

/// Minimize the ridge objective subject to `Aξ = b`.
pub fn constrained_ridge_solve(
    g: &Matrix,
    c: &Vector,
    lambda: f64,
    a: &Matrix,
    b: &Vector,
) -> Result<Vector> {
    if a.nrows() == 0 {
        if a.ncols() != 0 && a.ncols() != g.ncols() {
            return Err(Error::DimensionMismatch("constraint columns".into()));
        }
        return ridge_solve(g, c, lambda);
    }
    check_symmetric(g)?;
    if c.len() != g.nrows() || a.ncols() != g.ncols() || a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "G {}x{}, c {}, A {}x{}, b {}",
            g.nrows(),
            g.ncols(),
            c.len(),
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge weight must be >= 0, got {lambda}")));
    }
    let h = add_ridge(g, lambda);
    let (x, reduced_full_rank) = minimize_eq(&h, c, a, b)?;
    if !reduced_full_rank {
        return Err(Error::InfeasibleConstraints(
            "KKT system is singular: objective is flat on the constraint null space".into(),
        ));
    }
    Ok(x)
}

/// Null-space method for `min xᵀHx − 2⟨c,x⟩ s.t. Ax = b`. Dependent rows are
/// tolerated as long as they are consistent. Returns the minimizer and whether
/// the reduced Hessian was numerically nonsingular.
pub(crate) fn minimize_eq(h: &Matrix, c: &Vector, a: &Matrix, b: &Vector) -> Result<(Vector, bool)> {
    let n = h.nrows();
    if a.nrows() == 0 {
        let s = solve_psd(h, c);
        return Ok((s.x, s.rank == n));
    }
    let m = a.nrows();
    // pad to at least n rows so the SVD yields a complete right basis
    let rows = m.max(n);
    let mut padded = Matrix::zeros(rows, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let mut rhs = Vector::zeros(rows);
    rhs.rows_mut(0, m).copy_from(b);
    let svd = padded.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::InfeasibleConstraints("SVD of constraint matrix failed".into())),
    };
    let sigma = svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-10 * smax.max(f64::MIN_POSITIVE) * (n.max(m) as f64);
    let mut xp = Vector::zeros(n);
    let mut null_cols = Vec::new();
    for i in 0..sigma.len().min(n) {
        let v = vt.row(i).transpose();
        if sigma[i] > tol {
            xp += v * (u.column(i).dot(&rhs) / sigma[i]);
        } else {
            null_cols.push(v);
        }
    }
    // rows of Vᵀ beyond the singular-value count (only when rows < n; not the case after padding)
    for i in sigma.len()..n {
        null_cols.push(vt.row(i).transpose());
    }
    let resid = (a * &xp - b).amax();
    let bscale = 1.0 + b.amax();
    let ascale = 1.0 + a.amax() * xp.amax();
    if resid > 1e-9 * bscale.max(ascale) {
        return Err(Error::InfeasibleConstraints(format!(
            "equality constraints are inconsistent (residual {resid:.3e})"
        )));
    }
    if null_cols.is_empty() {
        return Ok((xp, true));
    }
    let nb = Matrix::from_columns(&null_cols);
    let hr = nb.transpose() * h * &nb;
    let hr = (&hr + hr.transpose()) * 0.5;
    let cr = nb.transpose() * (c - h * &xp);
    let s = solve_psd(&hr, &cr);
    Ok((xp + nb * s.x, s.rank == null_cols.len()))
}

/// Largest number of inequality rows handled by the exhaustive active-set loop.
pub const MAX_INEQUALITY_ROWS: usize = 8;

/// Minimize `xᵀHx − 2⟨c, x⟩` subject to mixed equality/inequality rows.
///
/// Inequalities are handled by enumerating active sets: for a convex
/// objective, the optimum is the best feasible equality-constrained solution
/// over all subsets of active rows.
pub(crate) fn minimize_constrained(
    h: &Matrix,
    c: &Vector,
    cons: &LinearConstraints,
) -> Result<Vector> {
    let eq_rows: Vec<usize> =
        (0..cons.nrows()).filter(|&i| cons.senses[i] == ConstraintSense::Eq).collect();
    let le_rows: Vec<usize> =
        (0..cons.nrows()).filter(|&i| cons.senses[i] == ConstraintSense::Le).collect();
    if le_rows.len() > MAX_INEQUALITY_ROWS {
        return Err(Error::InvalidProblem(format!(
            "{} inequality rows exceed the active-set limit of {MAX_INEQUALITY_ROWS}",
            le_rows.len()
        )));
    }
    if le_rows.is_empty() {
        let a = cons.a.select_rows(&eq_rows);
        let b = Vector::from_iterator(eq_rows.len(), eq_rows.iter().map(|&i| cons.b[i]));
        return minimize_eq(h, c, &a, &b).map(|(x, _)| x);
    }
    let feas_tol = 1e-9 * (1.0 + cons.b.amax());
    let mut masks: Vec<u32> = (0..(1u32 << le_rows.len())).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut best: Option<(f64, Vector)> = None;
    for mask in masks {
        let mut rows = eq_rows.clone();
        rows.extend(
            le_rows.iter().enumerate().filter(|(j, _)| mask & (1 << j) != 0).map(|(_, &i)| i),
        );
        let a = cons.a.select_rows(&rows);
        let b = Vector::from_iterator(rows.len(), rows.iter().map(|&i| cons.b[i]));
        let x = match minimize_eq(h, c, &a, &b) {
            Ok((x, _)) => x,
            Err(Error::InfeasibleConstraints(_)) => continue,
            Err(e) => return Err(e),
        };
        if cons.max_violation(&x) > feas_tol * (1.0 + x.amax()) {
            continue;
        }
        let f = quadratic_objective(h, c, &x);
        if mask == 0 {
            return Ok(x);
        }
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| Error::InfeasibleConstraints("no active set yields a feasible point".into()))
}

/// Gram matrix `ΘᵀΘ`.
pub fn gram(theta: &Matrix) -> Matrix {
    theta.tr_mul(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Textbook Gaussian elimination with partial pivoting, used as an
    /// independent oracle.
    fn gauss_solve(a: &Matrix, b: &Vector) -> Vector {
        let n = a.nrows();
        let mut m = a.clone();
        let mut r = b.clone();
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
            m.swap_rows(col, p);
            r.swap_rows(col, p);
            for row in (col + 1)..n {
                let f = m[(row, col)] / m[(col, col)];
                for k in col..n {
                    m[(row, k)] -= f * m[(col, k)];
                }
                r[row] -= f * r[col];
            }
        }
        let mut x = Vector::zeros(n);
        for row in (0..n).rev() {
            let mut s = r[row];
            for k in (row + 1)..n {
                s -= m[(row, k)] * x[k];
            }
            x[row] = s / m[(row, row)];
        }
        x
    }

    fn random_spd(n: usize, rng: &mut RngStream) -> Matrix {
        let b = Matrix::from_fn(n + 3, n, |_, _| rng.normal());
        b.tr_mul(&b)
    }

    #[test]
    fn ridge_identity_examples() {
        let x = ridge_solve(&Matrix::identity(2, 2), &Vector::from_vec(vec![4.0, 6.0]), 1.0).unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![2.0, 3.0]), epsilon = 1e-14);
        let c = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = ridge_solve(&Matrix::identity(3, 3), &c, 0.0).unwrap();
        assert_relative_eq!(x, c, epsilon = 1e-14);
    }

    #[test]
    fn ridge_matches_gaussian_elimination() {
        let mut rng = RngStream::new(7);
        for _ in 0..20 {
            let g = random_spd(6, &mut rng);
            let c = Vector::from_fn(6, |_, _| rng.normal());
            let x = ridge_solve(&g, &c, 0.01).unwrap();
            let oracle = gauss_solve(&add_ridge(&g, 0.01), &c);
            assert!((x - oracle).amax() <= 1e-8);
        }
    }

    #[test]
    fn ridge_residual_and_gradient_bounds() {
        let mut rng = RngStream::new(11);
        for n in [1, 3, 8, 15] {
            let g = random_spd(n, &mut rng);
            let c = Vector::from_fn(n, |_, _| 10.0 * rng.normal());
            for lambda in [0.0, 1e-3, 1.0] {
                let x = ridge_solve(&g, &c, lambda).unwrap();
                let h = add_ridge(&g, lambda);
                let resid = (&h * &x - &c).norm();
                assert!(resid <= 1e-8 * (1.0 + c.norm()), "residual {resid}");
                let grad = (&h * &x - &c) * 2.0;
                assert!(grad.norm() <= 1e-7 * (1.0 + c.norm()));
            }
        }
    }

    #[test]
    fn ridge_rejects_singular_and_bad_shapes() {
        let g = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let c = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(ridge_solve(&g, &c, 0.0), Err(Error::SingularSystem { .. })));
        // ridge makes it solvable
        assert!(ridge_solve(&g, &c, 1e-3).is_ok());
        assert!(matches!(
            ridge_solve(&g, &Vector::zeros(3), 0.0),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            ridge_solve(&Matrix::zeros(2, 3), &c, 0.0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn pivoted_cholesky_reveals_rank() {
        let b = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // rank-2 Gram of a 4-column matrix
        let theta = Matrix::from_columns(&[
            b.column(0).into_owned(),
            b.column(1).into_owned(),
            b.column(0) + b.column(1),
            b.column(0) * 2.0,
        ]);
        let pc = PivotedCholesky::new(&gram(&theta), 1e-12);
        assert_eq!(pc.rank(), 2);
        // the truncated solve still attains the minimum when c is in range(G)
        let y = Vector::from_vec(vec![1.0, -1.0, 2.0]);
        let g = gram(&theta);
        let c = theta.tr_mul(&y);
        let x = pc.solve(&c);
        let resid = (&g * &x - &c).amax();
        assert!(resid < 1e-9, "{resid}");
    }

    #[test]
    fn constrained_projection_example() {
        let g = Matrix::identity(2, 2);
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = constrained_ridge_solve(&g, &Vector::zeros(2), 0.0, &a, &Vector::from_vec(vec![2.0]))
            .unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn empty_constraints_reduce_to_ridge() {
        let mut rng = RngStream::new(3);
        let g = random_spd(5, &mut rng);
        let c = Vector::from_fn(5, |_, _| rng.normal());
        let a = Matrix::zeros(0, 5);
        let x = constrained_ridge_solve(&g, &c, 0.1, &a, &Vector::zeros(0)).unwrap();
        assert_eq!(x, ridge_solve(&g, &c, 0.1).unwrap());
    }

    #[test]
    fn constrained_matches_multiplier_line_search() {
        // One equality aᵀξ = β: ξ(ν) = H⁻¹(c − ν a / 2); the multiplier is the
        // root of aᵀξ(ν) − β, found by bisection over a bracketing grid.
        let mut rng = RngStream::new(19);
        for _ in 0..10 {
            let n = 5;
            let g = random_spd(n, &mut rng);
            let c = Vector::from_fn(n, |_, _| rng.normal());
            let a = Vector::from_fn(n, |_, _| rng.normal());
            let beta = rng.normal();
            let lambda = 0.05;
            let h = add_ridge(&g, lambda);
            let xi_of = |nu: f64| gauss_solve(&h, &(&c - &a * (nu / 2.0)));
            let resid = |nu: f64| a.dot(&xi_of(nu)) - beta;
            let grid: Vec<f64> = (-4000..=4000).map(|i| i as f64 * 0.25).collect();
            let mut bracket = None;
            for w in grid.windows(2) {
                if resid(w[0]).signum() != resid(w[1]).signum() {
                    bracket = Some((w[0], w[1]));
                    break;
                }
            }
            let (mut lo, mut hi) = bracket.expect("multiplier bracket");
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if resid(lo).signum() == resid(mid).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = xi_of(0.5 * (lo + hi));
            let amat = Matrix::from_row_slice(1, n, a.as_slice());
            let x = constrained_ridge_solve(&g, &c, lambda, &amat, &Vector::from_vec(vec![beta]))
                .unwrap();
            assert!((x - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn constrained_beats_random_feasible_points() {
        let mut rng = RngStream::new(23);
        let n = 6;
        let g = random_spd(n, &mut rng);
        let c = Vector::from_fn(n, |_, _| rng.normal());
        let a = Matrix::from_fn(2, n, |_, _| rng.normal());
        let b = Vector::from_fn(2, |_, _| rng.normal());
        let lambda = 0.01;
        let x = constrained_ridge_solve(&g, &c, lambda, &a, &b).unwrap();
        assert!((&a * &x - &b).amax() <= 1e-8 * (1.0 + b.amax()));
        let f = ridge_objective(&g, &c, lambda, &x);
        // feasible points: x + null-space perturbations
        let svd = Matrix::from_fn(n, n, |i, j| if i < 2 { a[(i, j)] } else { 0.0 }).svd(false, true);
        let vt = svd.v_t.unwrap();
        let null: Vec<Vector> = (0..n)
            .filter(|&i| svd.singular_values[i] < 1e-10)
            .map(|i| vt.row(i).transpose())
            .collect();
        assert_eq!(null.len(), n - 2);
        for _ in 0..100 {
            let mut p = x.clone();
            for v in &null {
                p += v * rng.normal();
            }
            assert!(f <= ridge_objective(&g, &c, lambda, &p) + 1e-8);
        }
    }

    #[test]
    fn dependent_consistent_rows_are_tolerated() {
        let g = Matrix::identity(3, 3);
        let a = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        let x = constrained_ridge_solve(&g, &Vector::zeros(3), 0.0, &a, &Vector::from_vec(vec![2.0, 4.0]))
            .unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![1.0, 1.0, 0.0]), epsilon = 1e-12);
        let err = constrained_ridge_solve(
            &g,
            &Vector::zeros(3),
            0.0,
            &a,
            &Vector::from_vec(vec![2.0, 5.0]),
        );
        assert!(matches!(err, Err(Error::InfeasibleConstraints(_))));
    }

    #[test]
    fn inequality_active_set() {
        // min (x-3)² + (y-3)² s.t. x + y ≤ 2 → (1, 1)
        let h = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![3.0, 3.0]);
        let cons = LinearConstraints::new(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Vector::from_vec(vec![2.0]),
            vec![ConstraintSense::Le],
        )
        .unwrap();
        let x = minimize_constrained(&h, &c, &cons).unwrap();
        assert_relative_eq!(x, Vector::from_vec(vec![1.0, 1.0]), epsilon = 1e-12);
        // inactive inequality leaves the unconstrained optimum
        let loose = LinearConstraints::new(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Vector::from_vec(vec![10.0]),
            vec![ConstraintSense::Le],
        )
        .unwrap();
        let x = minimize_constrained(&h, &c, &loose).unwrap();
        assert_relative_eq!(x, c, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn ridge_solution_is_stationary(seed in 0u64..500, n in 1usize..10, lambda in 0.0f64..2.0) {
            let mut rng = RngStream::new(seed);
            let g = random_spd(n, &mut rng);
            let c = Vector::from_fn(n, |_, _| rng.normal());
            let x = ridge_solve(&g, &c, lambda).unwrap();
            let grad = (add_ridge(&g, lambda) * &x - &c) * 2.0;
            prop_assert!(grad.norm() <= 1e-7 * (1.0 + c.norm()));
        }
    }
}
