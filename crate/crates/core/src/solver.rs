//! Exact cardinality-constrained ridge regression by branch-and-bound.
//!
//! Solves
//!
//! ```text
//!   min  ξᵀ(G + λI)ξ − 2⟨c, ξ⟩   s.t.  |supp ξ| ≤ k,  Aξ (= | ≤) b
//! ```
//!
//! with SOS-1 semantics enforced structurally: every node fixes some
//! variables into the support (`S_in`), some out of it (`S_out`, eliminated
//! from the node problem) and leaves the rest free. Dropping the cardinality
//! constraint over `S_in ∪ F` gives a convex relaxation whose value is a
//! valid lower bound for the whole subtree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    add_ridge, minimize_constrained, quadratic_objective, ridge_objective, solve_psd, LinearConstraints, Matrix,
    Vector,
};

/// Quadratic data of one sparse regression problem.
#[derive(Debug, Clone)]
pub struct SparseRegressionProblem {
    pub gram: Matrix,
    pub linear: Vector,
    pub lambda: f64,
    pub k: usize,
    pub constraints: Option<LinearConstraints>,
    /// Block id of every variable (joint mode); informational for the search.
    pub groups: Option<Vec<usize>>,
}

impl SparseRegressionProblem {
    pub fn new(gram: Matrix, linear: Vector, lambda: f64, k: usize) -> Result<Self> {
        let p = Self { gram, linear, lambda, k, constraints: None, groups: None };
        p.validate()?;
        Ok(p)
    }

    /// Problem for `‖y − Θξ‖² + λ‖ξ‖²` with the constant `yᵀy` dropped.
    pub fn from_data(theta: &Matrix, y: &Vector, lambda: f64, k: usize) -> Result<Self> {
        if theta.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "library has {} rows, target {}",
                theta.nrows(),
                y.len()
            )));
        }
        Self::new(theta.tr_mul(theta), theta.tr_mul(y), lambda, k)
    }

    pub fn with_constraints(mut self, cons: LinearConstraints) -> Result<Self> {
        self.constraints = if cons.is_empty() && cons.ncols() == 0 { None } else { Some(cons) };
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, xi: &Vector) -> f64 {
        ridge_objective(&self.gram, &self.linear, self.lambda, xi)
    }

    fn validate(&self) -> Result<()> {
        let n = self.linear.len();
        if self.gram.nrows() != n || self.gram.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "Gram is {}x{} but linear term has {n} entries",
                self.gram.nrows(),
                self.gram.ncols()
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidProblem(format!("ridge weight must be >= 0, got {}", self.lambda)));
        }
        if self.k > n {
            return Err(Error::InvalidProblem(format!("sparsity {} exceeds dimension {n}", self.k)));
        }
        if self.gram.iter().chain(self.linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite problem data".into()));
        }
        let scale = self.gram.amax().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.gram[(i, j)] - self.gram[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidProblem("Gram matrix is not symmetric".into()));
                }
            }
        }
        if let Some(c) = &self.constraints {
            if c.ncols() != n {
                return Err(Error::InvalidProblem(format!(
                    "constraints act on {} variables, problem has {n}",
                    c.ncols()
                )));
            }
        }
        if let Some(g) = &self.groups {
            if g.len() != n {
                return Err(Error::InvalidProblem("group labels do not cover every variable".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Gap closed to the configured tolerance.
    Optimal,
    /// Time or node limit hit; the incumbent is returned with its gap.
    TimeLimit,
    /// No feasible support was found before the limits.
    Infeasible,
    /// Produced by a heuristic with no optimality certificate.
    Heuristic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseSolution {
    pub xi: Vector,
    pub support: Vec<usize>,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub status: SolveStatus,
    pub nodes_explored: usize,
    pub wall_time: f64,
}

impl SparseSolution {
    /// Wrap a heuristic estimate: the gap is undefined (NaN).
    pub fn heuristic(xi: Vector, objective: f64, wall_time: f64) -> Self {
        let support = support_of(&xi);
        Self {
            xi,
            support,
            objective,
            lower_bound: f64::NAN,
            gap: f64::NAN,
            status: SolveStatus::Heuristic,
            nodes_explored: 0,
            wall_time,
        }
    }
}

/// Indices of the nonzero entries.
pub fn support_of(xi: &Vector) -> Vec<usize> {
    xi.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BnbConfig {
    pub gap_tolerance: f64,
    /// Seconds.
    pub time_limit: f64,
    pub node_limit: Option<usize>,
    #[serde(skip)]
    pub warm_start: Option<Vector>,
    /// Per-variable coefficient bounds `(lower, upper)`; optional tightening.
    pub big_m: Option<Vec<(f64, f64)>>,
    /// JSON-lines node trace, off by default.
    pub trace: Option<PathBuf>,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self { gap_tolerance: 1e-6, time_limit: 30.0, node_limit: None, warm_start: None, big_m: None, trace: None }
    }
}

impl BnbConfig {
    fn validate(&self, n: usize) -> Result<()> {
        if !(self.gap_tolerance > 0.0) {
            return Err(Error::InvalidProblem("gap tolerance must be positive".into()));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::InvalidProblem("time limit must be positive".into()));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != n {
                return Err(Error::InvalidProblem("warm start has the wrong length".into()));
            }
        }
        if let Some(m) = &self.big_m {
            if m.len() != n {
                return Err(Error::InvalidProblem("big-M bounds have the wrong length".into()));
            }
            if m.iter().any(|&(lo, hi)| !(lo <= 0.0 && 0.0 <= hi) || !lo.is_finite() || !hi.is_finite()) {
                return Err(Error::InvalidProblem("big-M bounds must be finite and bracket zero".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum VarState {
    In,
    Out,
    Free,
}

struct Node {
    id: u64,
    depth: usize,
    states: Rc<Vec<VarState>>,
    lower_bound: f64,
    relaxation: Rc<Vector>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound, then oldest id, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lower_bound.total_cmp(&self.lower_bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Relaxation {
    x: Vector,
    value: f64,
}

struct Searcher<'a> {
    p: &'a SparseRegressionProblem,
    h: Matrix,
    big_m: Option<&'a [(f64, f64)]>,
}

impl Searcher<'_> {
    /// Minimize over the variables in `active`, all others fixed at zero.
    /// `None` when the side constraints cannot be met on this support.
    fn relax(&self, active: &[usize]) -> Result<Option<Relaxation>> {
        let n = self.p.dim();
        if active.is_empty() {
            if let Some(cons) = &self.p.constraints {
                if cons.max_violation(&Vector::zeros(n)) > 1e-9 * (1.0 + cons.b.amax()) {
                    return Ok(None);
                }
            }
            return Ok(Some(Relaxation { x: Vector::zeros(n), value: 0.0 }));
        }
        let h = self.h.select_rows(active).select_columns(active);
        let c = Vector::from_iterator(active.len(), active.iter().map(|&i| self.p.linear[i]));
        let (local, value) = match (&self.p.constraints, self.big_m) {
            (_, Some(bounds)) => {
                let lo: Vec<f64> = active.iter().map(|&i| bounds[i].0).collect();
                let hi: Vec<f64> = active.iter().map(|&i| bounds[i].1).collect();
                box_qp(&h, &c, &lo, &hi)
            }
            (Some(cons), None) => match minimize_constrained(&h, &c, &cons.restrict(active)) {
                Ok(x) => {
                    let v = quadratic_objective(&h, &c, &x);
                    (x, v)
                }
                Err(Error::InfeasibleConstraints(_)) => return Ok(None),
                Err(e) => return Err(e),
            },
            (None, None) => {
                let x = solve_psd(&h, &c).x;
                let v = quadratic_objective(&h, &c, &x);
                (x, v)
            }
        };
        let mut x = Vector::zeros(n);
        for (j, &i) in active.iter().enumerate() {
            x[i] = local[j];
        }
        Ok(Some(Relaxation { x, value }))
    }
}

/// Box-constrained convex QP by cyclic coordinate descent. Returns the
/// iterate and a certified lower bound on the box minimum (value of the
/// linearization minimized over the box), so the bound stays valid even if
/// the iteration stops early.
fn box_qp(h: &Matrix, c: &Vector, lo: &[f64], hi: &[f64]) -> (Vector, f64) {
    let n = c.len();
    let mut x = Vector::zeros(n);
    let scale = 1.0 + c.amax();
    for _ in 0..20_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let hii = h[(i, i)];
            let rest = h.row(i).transpose().dot(&x) - hii * x[i];
            let target = if hii > 0.0 {
                (c[i] - rest) / hii
            } else if c[i] - rest > 0.0 {
                hi[i]
            } else {
                lo[i]
            };
            let v = target.clamp(lo[i], hi[i]);
            change = change.max((v - x[i]).abs());
            x[i] = v;
        }
        if change <= 1e-14 * scale {
            break;
        }
    }
    let f = quadratic_objective(h, c, &x);
    let grad = (h * &x - c) * 2.0;
    let dual_gap: f64 = (0..n).map(|i| (grad[i] * (lo[i] - x[i])).min(grad[i] * (hi[i] - x[i]))).sum();
    (x, f + dual_gap.min(0.0))
}

struct Trace {
    out: BufWriter<File>,
}

impl Trace {
    fn log(&mut self, id: u64, depth: usize, lb: f64, incumbent: f64, action: &str) {
        let line = serde_json::json!({
            "node_id": id,
            "depth": depth,
            "lower_bound": finite_or_null(lb),
            "incumbent": finite_or_null(incumbent),
            "action": action,
        });
        // tracing is best effort
        let _ = writeln!(self.out, "{line}");
    }
}

fn finite_or_null(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn gap_of(objective: f64, lower_bound: f64) -> f64 {
    ((objective - lower_bound) / objective.abs().max(1.0)).max(0.0)
}

/// Indices of the `count` largest-magnitude entries of `x` among `candidates`;
/// ties go to the lowest index.
fn top_magnitude(x: &Vector, candidates: &[usize], count: usize) -> Vec<usize> {
    let mut c = candidates.to_vec();
    c.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    c.truncate(count);
    c
}

/// Best-subset ridge regression to certified optimality.
pub fn solve_sparse(problem: &SparseRegressionProblem, cfg: &BnbConfig) -> Result<SparseSolution> {
    problem.validate()?;
    let n = problem.dim();
    cfg.validate(n)?;
    if cfg.big_m.is_some() && problem.constraints.as_ref().is_some_and(|c| !c.is_empty()) {
        return Err(Error::InvalidProblem("big-M bounds cannot be combined with side constraints".into()));
    }
    let start = Instant::now();
    let limit = Duration::from_secs_f64(cfg.time_limit);
    let k = problem.k;
    let searcher = Searcher { p: problem, h: add_ridge(&problem.gram, problem.lambda), big_m: cfg.big_m.as_deref() };
    let mut trace = match &cfg.trace {
        Some(path) => Some(Trace { out: BufWriter::new(File::create(path)?) }),
        None => None,
    };

    let mut incumbent: Option<(Vector, f64)> = None;
    // Fit on a candidate support and keep it if it improves the incumbent.
    let try_support = |support: &mut Vec<usize>, incumbent: &mut Option<(Vector, f64)>| -> Result<bool> {
        support.sort_unstable();
        let Some(r) = searcher.relax(support)? else { return Ok(false) };
        let obj = problem.objective(&r.x);
        if incumbent.as_ref().is_none_or(|(_, best)| obj < *best) {
            *incumbent = Some((r.x, obj));
            return Ok(true);
        }
        Ok(false)
    };

    if let Some(w) = &cfg.warm_start {
        let nz: Vec<usize> = (0..n).filter(|&i| w[i] != 0.0).collect();
        let mut support = top_magnitude(w, &nz, k);
        try_support(&mut support, &mut incumbent)?;
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0u64;
    let mut nodes = 0usize;
    let mut pruned_bound = f64::INFINITY;
    let prune_tol = |inc: f64| 1e-9 * (1.0 + inc.abs());

    let root_states = vec![if k == 0 { VarState::Out } else { VarState::Free }; n];
    let root_active: Vec<usize> = (0..n).filter(|&i| root_states[i] != VarState::Out).collect();
    match searcher.relax(&root_active)? {
        Some(r) => heap.push(Node {
            id: next_id,
            depth: 0,
            states: Rc::new(root_states),
            lower_bound: r.value,
            relaxation: Rc::new(r.x),
        }),
        None => {
            return Err(Error::InfeasibleConstraints("side constraints admit no solution on the full library".into()))
        }
    }
    next_id += 1;

    let mut limited = false;
    while let Some(node) = heap.pop() {
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, f)| *f);
        if node.lower_bound >= inc_obj - prune_tol(inc_obj) {
            pruned_bound = pruned_bound.min(node.lower_bound);
            if let Some(t) = trace.as_mut() {
                t.log(node.id, node.depth, node.lower_bound, inc_obj, "prune");
            }
            continue;
        }
        let lb_now = node.lower_bound.min(pruned_bound);
        if incumbent.is_some() && gap_of(inc_obj, lb_now) <= cfg.gap_tolerance {
            heap.push(node);
            break;
        }
        if start.elapsed() >= limit || cfg.node_limit.is_some_and(|m| nodes >= m) {
            heap.push(node);
            limited = true;
            break;
        }
        nodes += 1;

        let states = &*node.states;
        let relax = &*node.relaxation;
        let in_set: Vec<usize> = (0..n).filter(|&i| states[i] == VarState::In).collect();
        let free: Vec<usize> = (0..n).filter(|&i| states[i] == VarState::Free).collect();
        let nonzero = (0..n).filter(|&i| relax[i] != 0.0).count();

        // The relaxation itself is feasible: this subtree is solved.
        if nonzero <= k || in_set.len() + free.len() <= k {
            let obj = problem.objective(relax);
            let improved = incumbent.as_ref().is_none_or(|(_, best)| obj < *best);
            if improved {
                incumbent = Some((relax.clone(), obj));
            }
            pruned_bound = pruned_bound.min(node.lower_bound);
            if let Some(t) = trace.as_mut() {
                t.log(node.id, node.depth, node.lower_bound, obj.min(inc_obj), "leaf");
            }
            continue;
        }

        // Round the relaxation into a feasible support.
        let mut support = in_set.clone();
        support.extend(top_magnitude(relax, &free, k - in_set.len()));
        try_support(&mut support, &mut incumbent)?;
        let inc_obj = incumbent.as_ref().map_or(f64::INFINITY, |(_, f)| *f);
        if let Some(t) = trace.as_mut() {
            t.log(node.id, node.depth, node.lower_bound, inc_obj, "branch");
        }

        let branch = top_magnitude(relax, &free, 1)[0];

        // Child 1: branch variable in the support. Same relaxation as the parent.
        let mut with = states.clone();
        with[branch] = VarState::In;
        if in_set.len() + 1 == k {
            for s in with.iter_mut() {
                if *s == VarState::Free {
                    *s = VarState::Out;
                }
            }
            let active: Vec<usize> = (0..n).filter(|&i| with[i] == VarState::In).collect();
            if let Some(r) = searcher.relax(&active)? {
                heap.push(Node {
                    id: next_id,
                    depth: node.depth + 1,
                    states: Rc::new(with),
                    lower_bound: r.value.max(node.lower_bound),
                    relaxation: Rc::new(r.x),
                });
            }
        } else {
            heap.push(Node {
                id: next_id,
                depth: node.depth + 1,
                states: Rc::new(with),
                lower_bound: node.lower_bound,
                relaxation: node.relaxation.clone(),
            });
        }
        next_id += 1;

        // Child 2: branch variable eliminated.
        let mut without = states.clone();
        without[branch] = VarState::Out;
        let active: Vec<usize> = (0..n).filter(|&i| without[i] != VarState::Out).collect();
        if let Some(r) = searcher.relax(&active)? {
            let lb = r.value.max(node.lower_bound);
            if lb < inc_obj - prune_tol(inc_obj) {
                heap.push(Node {
                    id: next_id,
                    depth: node.depth + 1,
                    states: Rc::new(without),
                    lower_bound: lb,
                    relaxation: Rc::new(r.x),
                });
            } else {
                pruned_bound = pruned_bound.min(lb);
            }
        }
        next_id += 1;
    }
    if let Some(t) = trace.as_mut() {
        let _ = t.out.flush();
    }

    let wall_time = start.elapsed().as_secs_f64();
    let Some((xi, objective)) = incumbent else {
        if limited {
            return Ok(SparseSolution {
                xi: Vector::zeros(n),
                support: Vec::new(),
                objective: f64::INFINITY,
                lower_bound: heap.peek().map_or(f64::NEG_INFINITY, |nd| nd.lower_bound),
                gap: f64::INFINITY,
                status: SolveStatus::Infeasible,
                nodes_explored: nodes,
                wall_time,
            });
        }
        return Err(Error::InfeasibleConstraints(format!("no support of size <= {k} satisfies the side constraints")));
    };
    let open = heap.peek().map_or(f64::INFINITY, |nd| nd.lower_bound);
    let lower_bound = open.min(pruned_bound).min(objective);
    let gap = gap_of(objective, lower_bound);
    let status = if gap <= cfg.gap_tolerance { SolveStatus::Optimal } else { SolveStatus::TimeLimit };
    Ok(SparseSolution {
        support: support_of(&xi),
        xi,
        objective,
        lower_bound,
        gap,
        status,
        nodes_explored: nodes,
        wall_time,
    })
}

/// Result of a joint multi-target fit.
#[derive(Debug, Clone)]
pub struct JointSolution {
    /// Solution over the stacked vector `ξ̄ = [ξ⁽¹⁾; …; ξ⁽ᵈ⁾]`.
    pub stacked: SparseSolution,
    /// `D × d` coefficient matrix.
    pub coefficients: Matrix,
}

impl JointSolution {
    /// Split into per-target solutions; bounds and status are those of the
    /// joint search, objectives are the per-block contributions.
    pub fn per_dimension(&self, problem: &SparseRegressionProblem) -> Vec<SparseSolution> {
        let d_lib = self.coefficients.nrows();
        (0..self.coefficients.ncols())
            .map(|j| {
                let xi = self.coefficients.column(j).into_owned();
                let block: Vec<usize> = (j * d_lib..(j + 1) * d_lib).collect();
                let g = problem.gram.select_rows(&block).select_columns(&block);
                let c = Vector::from_iterator(d_lib, block.iter().map(|&i| problem.linear[i]));
                SparseSolution {
                    support: support_of(&xi),
                    objective: ridge_objective(&g, &c, problem.lambda, &xi),
                    xi,
                    lower_bound: self.stacked.lower_bound,
                    gap: self.stacked.gap,
                    status: self.stacked.status,
                    nodes_explored: self.stacked.nodes_explored,
                    wall_time: self.stacked.wall_time,
                }
            })
            .collect()
    }
}

/// Block-diagonal problem for fitting every target column of `targets`
/// against the shared library `theta` under one global sparsity budget.
pub fn joint_problem(
    theta: &Matrix,
    targets: &Matrix,
    lambda: f64,
    k_global: usize,
    constraints: Option<LinearConstraints>,
) -> Result<SparseRegressionProblem> {
    if theta.nrows() != targets.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "library has {} rows, targets {}",
            theta.nrows(),
            targets.nrows()
        )));
    }
    let (dl, d) = (theta.ncols(), targets.ncols());
    let g = theta.tr_mul(theta);
    let mut gram = Matrix::zeros(dl * d, dl * d);
    let mut linear = Vector::zeros(dl * d);
    for j in 0..d {
        gram.view_mut((j * dl, j * dl), (dl, dl)).copy_from(&g);
        linear.rows_mut(j * dl, dl).copy_from(&theta.tr_mul(&targets.column(j)));
    }
    let mut p = SparseRegressionProblem::new(gram, linear, lambda, k_global)?;
    p.groups = Some((0..dl * d).map(|i| i / dl).collect());
    match constraints {
        Some(c) => p.with_constraints(c),
        None => Ok(p),
    }
}

/// Joint fit of all targets with side constraints on the stacked vector.
pub fn solve_joint(
    theta: &Matrix,
    targets: &Matrix,
    lambda: f64,
    k_global: usize,
    constraints: Option<LinearConstraints>,
    cfg: &BnbConfig,
) -> Result<JointSolution> {
    let problem = joint_problem(theta, targets, lambda, k_global, constraints)?;
    let stacked = solve_sparse(&problem, cfg)?;
    let coefficients = Matrix::from_column_slice(theta.ncols(), targets.ncols(), stacked.xi.as_slice());
    Ok(JointSolution { stacked, coefficients })
}

/// Ordinary least squares restricted to `support`, zero elsewhere.
pub fn unbias(support: &[usize], theta: &Matrix, y: &Vector) -> Result<Vector> {
    if theta.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("library has {} rows, target {}", theta.nrows(), y.len())));
    }
    let mut xi = Vector::zeros(theta.ncols());
    if support.is_empty() {
        return Ok(xi);
    }
    if support.iter().any(|&i| i >= theta.ncols()) || support.len() > theta.nrows() {
        return Err(Error::SingularSupport);
    }
    let sub = theta.select_columns(support);
    // column scaling keeps the rank test meaningful for badly scaled terms
    let norms: Vec<f64> = sub.column_iter().map(|c| c.norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::SingularSupport);
    }
    let mut scaled = sub.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= norms[j];
    }
    let qr = scaled.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax) {
        return Err(Error::SingularSupport);
    }
    let qty = qr.q().tr_mul(y);
    let sol = r.solve_upper_triangular(&qty).ok_or(Error::SingularSupport)?;
    for (j, &i) in support.iter().enumerate() {
        xi[i] = sol[j] / norms[j];
    }
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ConstraintSense;
    use crate::rng::RngStream;

    fn random_problem(rng: &mut RngStream, n: usize, d: usize, k: usize, lambda: f64) -> SparseRegressionProblem {
        let theta = Matrix::from_fn(n, d, |_, _| rng.normal());
        let truth = Vector::from_fn(d, |i, _| if i % 3 == 0 { rng.uniform(-2.0, 2.0) } else { 0.0 });
        let y = &theta * truth + Vector::from_fn(n, |_, _| 0.3 * rng.normal());
        SparseRegressionProblem::from_data(&theta, &y, lambda, k).unwrap()
    }

    /// Exhaustive enumeration of supports with |S| ≤ k, via an independent
    /// Gaussian-elimination solve of the normal equations.
    fn brute_force(p: &SparseRegressionProblem) -> f64 {
        let d = p.dim();
        let mut best = 0.0f64;
        for mask in 1u32..(1 << d) {
            if mask.count_ones() as usize > p.k {
                continue;
            }
            let s: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
            let m = s.len();
            let mut a: Vec<Vec<f64>> = s
                .iter()
                .map(|&i| {
                    let mut row: Vec<f64> = s.iter().map(|&j| p.gram[(i, j)]).collect();
                    row[s.iter().position(|&x| x == i).unwrap()] += p.lambda;
                    row.push(p.linear[i]);
                    row
                })
                .collect();
            for col in 0..m {
                let piv = (col..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
                a.swap(col, piv);
                for r in 0..m {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        for c in col..=m {
                            a[r][c] -= f * a[col][c];
                        }
                    }
                }
            }
            // value at the optimum of xᵀHx − 2cᵀx is −cᵀx*
            let val: f64 = -(0..m).map(|r| p.linear[s[r]] * a[r][m] / a[r][r]).sum::<f64>();
            best = best.min(val);
        }
        best
    }

    #[test]
    fn orthogonal_design_selects_largest() {
        let theta = Matrix::identity(3, 3);
        let y = Vector::from_vec(vec![3.0, 2.0, 1.0]);
        let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 2).unwrap();
        let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
        assert_eq!(s.support, vec![0, 1]);
        assert!((s.xi.clone() - Vector::from_vec(vec![3.0, 2.0, 0.0])).amax() < 1e-12);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.gap <= 1e-6);
    }

    #[test]
    fn full_budget_is_plain_ridge() {
        let mut rng = RngStream::new(4);
        let p = random_problem(&mut rng, 30, 8, 8, 0.01);
        let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
        let r = crate::linalg::ridge_solve(&p.gram, &p.linear, p.lambda).unwrap();
        assert!((&s.xi - r).amax() < 1e-9);
        assert_eq!(s.gap, 0.0);
        assert_eq!(s.nodes_explored, 1);
    }

    #[test]
    fn zero_budget_is_zero() {
        let mut rng = RngStream::new(5);
        let p = random_problem(&mut rng, 30, 6, 0, 0.0);
        let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
        assert!(s.xi.iter().all(|v| *v == 0.0));
        assert_eq!(s.objective, 0.0);
        assert!(s.support.is_empty());
    }

    #[test]
    fn matches_enumeration_on_random_instances() {
        let mut rng = RngStream::new(2024);
        let cfg = BnbConfig { gap_tolerance: 1e-12, ..Default::default() };
        for trial in 0..20 {
            let k = 1 + trial % 4;
            let lambda = if trial % 2 == 0 { 0.0 } else { 0.01 };
            let p = random_problem(&mut rng, 40, 12, k, lambda);
            let s = solve_sparse(&p, &cfg).unwrap();
            let oracle = brute_force(&p);
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!(s.support.len() <= k);
            assert!(
                (s.objective - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
                "trial {trial}: {} vs {oracle}",
                s.objective
            );
            assert!((s.objective - p.objective(&s.xi)).abs() <= 1e-9 * s.objective.abs().max(1.0));
        }
    }

    #[test]
    fn certificates_bracket_the_optimum() {
        let mut rng = RngStream::new(11);
        for trial in 0..10 {
            let p = random_problem(&mut rng, 25, 10, 1 + trial % 5, 0.001);
            let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
            let opt = brute_force(&p);
            let tol = 1e-9 * opt.abs().max(1.0);
            assert!(s.lower_bound <= opt + tol && opt <= s.objective + tol);
            assert!(s.gap >= 0.0);
        }
    }

    #[test]
    fn node_limit_reports_honest_gap() {
        let mut rng = RngStream::new(12);
        let p = random_problem(&mut rng, 25, 12, 4, 0.0);
        let cfg = BnbConfig { node_limit: Some(2), ..Default::default() };
        let s = solve_sparse(&p, &cfg).unwrap();
        let opt = brute_force(&p);
        assert!(s.lower_bound <= opt + 1e-9 * opt.abs());
        if s.status == SolveStatus::TimeLimit {
            assert!(s.gap > cfg.gap_tolerance);
        }
    }

    #[test]
    fn objective_is_monotone_in_k() {
        let mut rng = RngStream::new(13);
        let base = random_problem(&mut rng, 30, 9, 0, 0.01);
        let mut prev = f64::INFINITY;
        for k in 0..=9 {
            let p = SparseRegressionProblem { k, ..base.clone() };
            let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
            assert!(s.objective <= prev + 1e-9 * prev.abs().max(1.0));
            prev = s.objective;
        }
    }

    #[test]
    fn search_is_deterministic() {
        let mut rng = RngStream::new(14);
        let p = random_problem(&mut rng, 40, 14, 4, 0.0);
        let a = solve_sparse(&p, &BnbConfig::default()).unwrap();
        let b = solve_sparse(&p, &BnbConfig::default()).unwrap();
        assert_eq!(a.nodes_explored, b.nodes_explored);
        assert_eq!(a.xi, b.xi);
    }

    #[test]
    fn warm_start_never_hurts() {
        let mut rng = RngStream::new(15);
        for _ in 0..5 {
            let p = random_problem(&mut rng, 40, 12, 3, 0.0);
            let cold = solve_sparse(&p, &BnbConfig::default()).unwrap();
            let warm_cfg = BnbConfig { warm_start: Some(cold.xi.clone()), ..Default::default() };
            let warm = solve_sparse(&p, &warm_cfg).unwrap();
            assert!(warm.objective <= cold.objective + 1e-9 * cold.objective.abs());
            assert!(warm.nodes_explored <= cold.nodes_explored);
        }
    }

    #[test]
    fn big_m_bounds_are_respected() {
        let theta = Matrix::identity(3, 3);
        let y = Vector::from_vec(vec![3.0, -2.0, 1.0]);
        let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 2).unwrap();
        let cfg = BnbConfig { big_m: Some(vec![(-1.0, 1.0); 3]), ..Default::default() };
        let s = solve_sparse(&p, &cfg).unwrap();
        // clamped contributions: each variable gives at most 2|y|−1 = 5, 3, 1
        assert_eq!(s.support, vec![0, 1]);
        assert!((s.xi[0] - 1.0).abs() < 1e-9 && (s.xi[1] + 1.0).abs() < 1e-9);
        assert_eq!(s.status, SolveStatus::Optimal);
    }

    #[test]
    fn trace_writes_json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.jsonl");
        let mut rng = RngStream::new(16);
        let p = random_problem(&mut rng, 30, 8, 2, 0.0);
        let cfg = BnbConfig { trace: Some(path.clone()), ..Default::default() };
        let s = solve_sparse(&p, &cfg).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert!(!lines.is_empty());
        assert!(lines.len() >= s.nodes_explored);
        for l in &lines {
            assert!(l.get("node_id").is_some() && l.get("action").is_some());
        }
    }

    #[test]
    fn joint_separable_matches_independent_solves() {
        let mut rng = RngStream::new(17);
        for _ in 0..5 {
            let theta = Matrix::from_fn(40, 8, |_, _| rng.normal());
            let targets = Matrix::from_fn(40, 2, |_, _| rng.normal());
            let mut total = 0.0;
            let mut budget = 0;
            for j in 0..2 {
                let y = targets.column(j).into_owned();
                let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 2 + j).unwrap();
                let s = solve_sparse(&p, &BnbConfig { gap_tolerance: 1e-12, ..Default::default() }).unwrap();
                total += s.objective;
                budget += s.support.len();
            }
            let cfg = BnbConfig { gap_tolerance: 1e-12, ..Default::default() };
            let joint = solve_joint(&theta, &targets, 0.0, budget, None, &cfg).unwrap();
            // joint optimum can only be better; on separable data with the
            // summed budget it is at most the sum and at least brute force
            assert!(joint.stacked.objective <= total + 1e-8 * total.abs());
            let p = joint_problem(&theta, &targets, 0.0, budget, None).unwrap();
            assert!((joint.stacked.objective - brute_force(&p)).abs() <= 1e-8 * total.abs());
            let dims = joint.per_dimension(&p);
            let sum: f64 = dims.iter().map(|s| s.objective).sum();
            assert!((sum - joint.stacked.objective).abs() <= 1e-9 * total.abs());
        }
    }

    #[test]
    fn equality_constraint_forces_membership() {
        let mut rng = RngStream::new(18);
        let theta = Matrix::from_fn(30, 4, |_, _| rng.normal());
        let targets = Matrix::from_fn(30, 2, |_, _| rng.normal());
        let mut a = Matrix::zeros(1, 8);
        a[(0, 1)] = 1.0;
        let cons = LinearConstraints::equalities(a, Vector::from_vec(vec![5.0])).unwrap();
        let j = solve_joint(&theta, &targets, 0.0, 2, Some(cons), &BnbConfig::default()).unwrap();
        assert!((j.stacked.xi[1] - 5.0).abs() < 1e-9);
        assert!(j.stacked.support.contains(&1));
        assert_eq!(j.stacked.status, SolveStatus::Optimal);
    }

    #[test]
    fn constrained_matches_enumeration() {
        // oracle: enumerate supports, solve each with the equality-constrained solver
        let mut rng = RngStream::new(19);
        for _ in 0..5 {
            let theta = Matrix::from_fn(30, 7, |_, _| rng.normal());
            let y = Vector::from_fn(30, |_, _| rng.normal());
            let a = Matrix::from_row_slice(1, 7, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            let cons = LinearConstraints::equalities(a.clone(), Vector::from_vec(vec![1.0])).unwrap();
            let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 3).unwrap().with_constraints(cons).unwrap();
            let s = solve_sparse(&p, &BnbConfig { gap_tolerance: 1e-12, ..Default::default() }).unwrap();
            let mut best = f64::INFINITY;
            for mask in 1u32..128 {
                if mask.count_ones() > 3 || mask & 3 == 0 {
                    continue;
                }
                let sup: Vec<usize> = (0..7).filter(|i| mask & (1 << i) != 0).collect();
                let g = p.gram.select_rows(&sup).select_columns(&sup);
                let c = Vector::from_iterator(sup.len(), sup.iter().map(|&i| p.linear[i]));
                let x = crate::linalg::constrained_ridge_solve(
                    &g,
                    &c,
                    0.0,
                    &a.select_columns(&sup),
                    &Vector::from_vec(vec![1.0]),
                )
                .unwrap();
                best = best.min(quadratic_objective(&g, &c, &x));
            }
            assert!((s.objective - best).abs() <= 1e-8 * best.abs().max(1.0), "{} vs {best}", s.objective);
            assert!((s.xi[0] + s.xi[1] - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn inequality_constraints_hold() {
        let theta = Matrix::identity(3, 3);
        let y = Vector::from_vec(vec![3.0, 2.0, 1.0]);
        let a = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let cons = LinearConstraints::new(a, Vector::from_vec(vec![1.5]), vec![ConstraintSense::Le]).unwrap();
        let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 2).unwrap().with_constraints(cons).unwrap();
        let s = solve_sparse(&p, &BnbConfig::default()).unwrap();
        // ξ₀ capped at 1.5 contributes 2·3·1.5 − 2.25 = 6.75 > 4 (from ξ₁ = 2)
        assert_eq!(s.support, vec![0, 1]);
        assert!((s.xi[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        let theta = Matrix::identity(3, 3);
        let y = Vector::from_vec(vec![3.0, 2.0, 1.0]);
        // needs all three coefficients nonzero but k = 1
        let a = Matrix::identity(3, 3);
        let cons = LinearConstraints::equalities(a, Vector::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        let p = SparseRegressionProblem::from_data(&theta, &y, 0.0, 1).unwrap().with_constraints(cons).unwrap();
        assert!(matches!(solve_sparse(&p, &BnbConfig::default()), Err(Error::InfeasibleConstraints(_))));
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let g = Matrix::identity(2, 2);
        let c = Vector::zeros(2);
        assert!(matches!(SparseRegressionProblem::new(g.clone(), c.clone(), 0.0, 3), Err(Error::InvalidProblem(_))));
        assert!(matches!(SparseRegressionProblem::new(g, c, -1.0, 1), Err(Error::InvalidProblem(_))));
    }

    #[test]
    fn unbias_examples() {
        let mut rng = RngStream::new(20);
        let theta = Matrix::from_fn(4, 4, |_, _| rng.normal());
        let y = Vector::from_fn(4, |_, _| rng.normal());
        let xi = unbias(&[0, 1, 2, 3], &theta, &y).unwrap();
        assert!((&theta * &xi - &y).amax() < 1e-10);
        assert_eq!(unbias(&[], &theta, &y).unwrap(), Vector::zeros(4));
        let dup = Matrix::from_fn(10, 2, |i, _| i as f64);
        assert!(matches!(unbias(&[0, 1], &dup, &Vector::zeros(10)), Err(Error::SingularSupport)));
    }

    #[test]
    fn unbias_recovers_lorenz_from_exact_derivatives() {
        use crate::library::polynomial_library;
        use crate::systems::{rk4_integrate, OdeSystem};
        let sys = OdeSystem::lorenz(10.0, 8.0 / 3.0, 28.0);
        let traj = rk4_integrate(&sys, &Vector::from_vec(vec![-8.0, 8.0, 27.0]), 10.0, 0.002).unwrap();
        let lib = polynomial_library(&traj, 5, true);
        let truth = sys.true_coefficients(5, true).unwrap();
        for j in 0..3 {
            let y = Vector::from_iterator(
                traj.len(),
                (0..traj.len()).map(|i| {
                    let s: Vec<f64> = traj.states.row(i).iter().copied().collect();
                    sys.rhs(&s)[j]
                }),
            );
            let support: Vec<usize> = (0..truth.nrows()).filter(|&i| truth[(i, j)] != 0.0).collect();
            let xi = unbias(&support, &lib.theta, &y).unwrap();
            for i in 0..truth.nrows() {
                assert!((xi[i] - truth[(i, j)]).abs() <= 1e-6, "dim {j} term {i}: {} vs {}", xi[i], truth[(i, j)]);
            }
        }
    }
}
