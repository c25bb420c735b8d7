//! Benchmark ODE systems, a fixed-step RK4 integrator, initial-condition
//! samplers and measurement noise.

use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::library::monomial_exponents;
use crate::linalg::{Matrix, Vector};
use crate::rng::RngStream;

/// States whose magnitude exceeds this are reported as [`Error::Diverged`].
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

type RhsFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// One nonzero term of a ground-truth equation: coefficient times a monomial
/// in the fitted library variables.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueTerm {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

fn term(exponents: &[u32], coefficient: f64) -> TrueTerm {
    TrueTerm { exponents: exponents.to_vec(), coefficient }
}

/// The benchmark systems with built-in parameters, samplers and ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Lorenz,
    Hopf,
    Mhd,
    Duffing,
    VanDerPol,
    Lotka,
    Rossler,
}

impl SystemKind {
    pub const ALL: [SystemKind; 7] = [
        SystemKind::Lorenz,
        SystemKind::Hopf,
        SystemKind::Mhd,
        SystemKind::Duffing,
        SystemKind::VanDerPol,
        SystemKind::Lotka,
        SystemKind::Rossler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Lorenz => "lorenz",
            SystemKind::Hopf => "hopf",
            SystemKind::Mhd => "mhd",
            SystemKind::Duffing => "duffing",
            SystemKind::VanDerPol => "vanderpol",
            SystemKind::Lotka => "lotka",
            SystemKind::Rossler => "rossler",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key.to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownSystem(name.to_string()))
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An autonomous ODE `ẋ = f(x)`.
///
/// Built-in systems carry a ground truth: which state columns feed the
/// regression library, which derivative columns are regressed, and the sparse
/// polynomial form of each regressed equation.
#[derive(Clone)]
pub struct OdeSystem {
    name: String,
    kind: Option<SystemKind>,
    dim: usize,
    parameters: Vec<(String, f64)>,
    rhs: Arc<RhsFn>,
    library_vars: Vec<usize>,
    target_vars: Vec<usize>,
    truth: Vec<Vec<TrueTerm>>,
    default_degree: usize,
}

impl fmt::Debug for OdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("parameters", &self.parameters)
            .finish_non_exhaustive()
    }
}

impl OdeSystem {
    /// A user-defined system without ground truth or sampler.
    pub fn custom<F>(name: &str, dim: usize, rhs: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            kind: None,
            dim,
            parameters: Vec::new(),
            rhs: Arc::new(rhs),
            library_vars: (0..dim).collect(),
            target_vars: (0..dim).collect(),
            truth: Vec::new(),
            default_degree: 3,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(SystemKind::from_name(name)?))
    }

    pub fn builtin(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Lorenz => Self::lorenz(10.0, 8.0 / 3.0, 28.0),
            SystemKind::Hopf => Self::hopf(-0.05, 1.0, 1.0),
            SystemKind::Mhd => Self::mhd(),
            SystemKind::Duffing => Self::duffing(-2.0, 0.1),
            SystemKind::VanDerPol => Self::van_der_pol(3.0),
            SystemKind::Lotka => Self::lotka(1.0, 10.0),
            SystemKind::Rossler => Self::rossler(0.2, 0.2, 5.7),
        }
    }

    fn with_truth(
        kind: SystemKind,
        dim: usize,
        parameters: &[(&str, f64)],
        rhs: Arc<RhsFn>,
        truth: Vec<Vec<TrueTerm>>,
        default_degree: usize,
    ) -> Self {
        Self {
            name: kind.name().to_string(),
            kind: Some(kind),
            dim,
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            rhs,
            library_vars: (0..dim).collect(),
            target_vars: (0..dim).collect(),
            truth,
            default_degree,
        }
    }

    pub fn lorenz(sigma: f64, beta: f64, rho: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            d[0] = sigma * (s[1] - s[0]);
            d[1] = s[0] * (rho - s[2]) - s[1];
            d[2] = s[0] * s[1] - beta * s[2];
        });
        let truth = vec![
            vec![term(&[1, 0, 0], -sigma), term(&[0, 1, 0], sigma)],
            vec![term(&[1, 0, 0], rho), term(&[0, 1, 0], -1.0), term(&[1, 0, 1], -1.0)],
            vec![term(&[0, 0, 1], -beta), term(&[1, 1, 0], 1.0)],
        ];
        Self::with_truth(
            SystemKind::Lorenz,
            3,
            &[("sigma", sigma), ("beta", beta), ("rho", rho)],
            rhs,
            truth,
            5,
        )
    }

    pub fn hopf(mu: f64, omega: f64, a: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            let r2 = s[0] * s[0] + s[1] * s[1];
            d[0] = mu * s[0] + omega * s[1] - a * s[0] * r2;
            d[1] = -omega * s[0] + mu * s[1] - a * s[1] * r2;
        });
        let truth = vec![
            vec![term(&[1, 0], mu), term(&[0, 1], omega), term(&[3, 0], -a), term(&[1, 2], -a)],
            vec![term(&[1, 0], -omega), term(&[0, 1], mu), term(&[2, 1], -a), term(&[0, 3], -a)],
        ];
        Self::with_truth(
            SystemKind::Hopf,
            2,
            &[("mu", mu), ("omega", omega), ("A", a)],
            rhs,
            truth,
            5,
        )
    }

    /// Triadic MHD model, state order `(V1, V2, V3, B1, B2, B3)`.
    pub fn mhd() -> Self {
        let rhs = Arc::new(|s: &[f64], d: &mut [f64]| {
            let (v1, v2, v3, b1, b2, b3) = (s[0], s[1], s[2], s[3], s[4], s[5]);
            d[0] = 4.0 * (v2 * v3 - b2 * b3);
            d[1] = -7.0 * (v1 * v3 - b1 * b3);
            d[2] = 3.0 * (v1 * v2 - b1 * b2);
            d[3] = 2.0 * (b3 * v2 - v3 * b2);
            d[4] = 5.0 * (v3 * b1 - b3 * v1);
            d[5] = 9.0 * (v1 * b2 - b1 * v2);
        });
        let e = |idx: &[usize]| {
            let mut v = vec![0u32; 6];
            for &i in idx {
                v[i] += 1;
            }
            v
        };
        let truth = vec![
            vec![term(&e(&[1, 2]), 4.0), term(&e(&[4, 5]), -4.0)],
            vec![term(&e(&[0, 2]), -7.0), term(&e(&[3, 5]), 7.0)],
            vec![term(&e(&[0, 1]), 3.0), term(&e(&[3, 4]), -3.0)],
            vec![term(&e(&[1, 5]), 2.0), term(&e(&[2, 4]), -2.0)],
            vec![term(&e(&[2, 3]), 5.0), term(&e(&[0, 5]), -5.0)],
            vec![term(&e(&[0, 4]), 9.0), term(&e(&[1, 3]), -9.0)],
        ];
        Self::with_truth(
            SystemKind::Mhd,
            6,
            &[("c1", 4.0), ("c2", -7.0), ("c3", 3.0), ("c4", 2.0), ("c5", 5.0), ("c6", 9.0)],
            rhs,
            truth,
            3,
        )
    }

    /// Hamiltonian Duffing system in `(x, y, X, Y)` with potential
    /// `V = −ω/2 (x² + y²) + α/4 (x² + y²)²`.
    ///
    /// The regression fits the momentum equations `Ẋ = −∂V/∂x`, `Ẏ = −∂V/∂y`
    /// on a library in the positions `(x, y)`.
    pub fn duffing(omega: f64, alpha: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            let r2 = s[0] * s[0] + s[1] * s[1];
            d[0] = s[2];
            d[1] = s[3];
            d[2] = omega * s[0] - alpha * s[0] * r2;
            d[3] = omega * s[1] - alpha * s[1] * r2;
        });
        let truth = vec![
            vec![term(&[1, 0], omega), term(&[3, 0], -alpha), term(&[1, 2], -alpha)],
            vec![term(&[0, 1], omega), term(&[2, 1], -alpha), term(&[0, 3], -alpha)],
        ];
        let mut sys = Self::with_truth(
            SystemKind::Duffing,
            4,
            &[("omega", omega), ("alpha", alpha)],
            rhs,
            truth,
            3,
        );
        sys.library_vars = vec![0, 1];
        sys.target_vars = vec![2, 3];
        sys
    }

    pub fn van_der_pol(mu: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            d[0] = s[1];
            d[1] = mu * (1.0 - s[0] * s[0]) * s[1] - s[0];
        });
        let truth = vec![
            vec![term(&[0, 1], 1.0)],
            vec![term(&[1, 0], -1.0), term(&[0, 1], mu), term(&[2, 1], -mu)],
        ];
        Self::with_truth(SystemKind::VanDerPol, 2, &[("mu", mu)], rhs, truth, 3)
    }

    pub fn lotka(p1: f64, p2: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            d[0] = p1 * s[0] - p2 * s[0] * s[1];
            d[1] = p2 * s[0] * s[1] - 2.0 * p1 * s[1];
        });
        let truth = vec![
            vec![term(&[1, 0], p1), term(&[1, 1], -p2)],
            vec![term(&[0, 1], -2.0 * p1), term(&[1, 1], p2)],
        ];
        Self::with_truth(SystemKind::Lotka, 2, &[("p1", p1), ("p2", p2)], rhs, truth, 3)
    }

    pub fn rossler(a: f64, b: f64, c: f64) -> Self {
        let rhs = Arc::new(move |s: &[f64], d: &mut [f64]| {
            d[0] = -s[1] - s[2];
            d[1] = s[0] + a * s[1];
            d[2] = b - c * s[2] + s[0] * s[2];
        });
        let truth = vec![
            vec![term(&[0, 1, 0], -1.0), term(&[0, 0, 1], -1.0)],
            vec![term(&[1, 0, 0], 1.0), term(&[0, 1, 0], a)],
            vec![term(&[0, 0, 0], b), term(&[0, 0, 1], -c), term(&[1, 0, 1], 1.0)],
        ];
        Self::with_truth(SystemKind::Rossler, 3, &[("a", a), ("b", b), ("c", c)], rhs, truth, 3)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> Option<SystemKind> {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parameters(&self) -> &[(String, f64)] {
        &self.parameters
    }

    pub fn parameter(&self, key: &str) -> Option<f64> {
        self.parameters.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// State columns the regression library is built from.
    pub fn library_vars(&self) -> &[usize] {
        &self.library_vars
    }

    /// State columns whose time derivatives are regressed.
    pub fn target_vars(&self) -> &[usize] {
        &self.target_vars
    }

    /// Polynomial degree of the oversized library used in the benchmarks.
    pub fn default_degree(&self) -> usize {
        self.default_degree
    }

    pub fn true_terms(&self) -> &[Vec<TrueTerm>] {
        &self.truth
    }

    pub fn eval(&self, state: &[f64], deriv: &mut [f64]) {
        (self.rhs)(state, deriv)
    }

    pub fn rhs(&self, state: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        self.eval(state, &mut d);
        d
    }

    /// Ground-truth coefficient matrix `Ξ` (`D × targets`) in the polynomial
    /// library of the given degree over [`Self::library_vars`].
    pub fn true_coefficients(&self, degree: usize, include_bias: bool) -> Result<Matrix> {
        if self.truth.is_empty() {
            return Err(Error::UnknownSystem(format!("{} has no ground truth", self.name)));
        }
        let exps = monomial_exponents(self.library_vars.len(), degree, include_bias);
        let mut xi = Matrix::zeros(exps.len(), self.truth.len());
        for (j, eq) in self.truth.iter().enumerate() {
            for t in eq {
                let row = exps.iter().position(|e| *e == t.exponents).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "degree-{degree} library cannot express term {:?} of {}",
                        t.exponents, self.name
                    ))
                })?;
                xi[(row, j)] = t.coefficient;
            }
        }
        Ok(xi)
    }
}

/// Uniformly sampled states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `n × d`, one row per sample.
    pub states: Matrix,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Matrix) -> Result<Self> {
        if times.len() != states.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} times for {} state rows",
                times.len(),
                states.nrows()
            )));
        }
        if times.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: times.len() });
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument("times must be strictly increasing".into()));
        }
        let span = (times[times.len() - 1] - times[0]).abs().max(1.0);
        for (i, w) in times.windows(2).enumerate() {
            let expected = times[0] + (i + 1) as f64 * dt;
            if !(w[1] > w[0]) || (w[1] - expected).abs() > 1e-9 * span {
                return Err(Error::InvalidArgument("times must be uniformly spaced".into()));
            }
        }
        Ok(Self { times, states, dt })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    /// Rows `start..end`, times kept.
    pub fn slice(&self, start: usize, end: usize) -> Trajectory {
        Trajectory {
            times: self.times[start..end].to_vec(),
            states: self.states.rows(start, end - start).into_owned(),
            dt: self.dt,
        }
    }

    /// Split at `floor(fraction · n)` into a leading and trailing segment.
    pub fn split(&self, fraction: f64) -> (Trajectory, Trajectory) {
        let cut = ((self.len() as f64) * fraction).floor() as usize;
        (self.slice(0, cut), self.slice(cut, self.len()))
    }

    /// Subset of state columns.
    pub fn select_columns(&self, cols: &[usize]) -> Trajectory {
        Trajectory { times: self.times.clone(), states: self.states.select_columns(cols), dt: self.dt }
    }

    /// Keep every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let idx: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        Trajectory {
            times: idx.iter().map(|&i| self.times[i]).collect(),
            states: self.states.select_rows(&idx),
            dt: self.dt * stride.max(1) as f64,
        }
    }

    /// CSV with header `t,x1,...,xd` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            row.extend(self.states.row(i).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut d = None;
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let parsed: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad number in trajectory CSV: {e}")))?;
            let width = parsed.len().saturating_sub(1);
            if *d.get_or_insert(width) != width || width == 0 {
                return Err(Error::InvalidArgument("ragged trajectory CSV".into()));
            }
            times.push(parsed[0]);
            values.extend_from_slice(&parsed[1..]);
        }
        let d = d.unwrap_or(0);
        let n = times.len();
        Trajectory::new(times, Matrix::from_row_slice(n, d, &values))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Classical fixed-step RK4, sampled at every step from `0` to `t_end`.
pub fn rk4_integrate(system: &OdeSystem, x0: &Vector, t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t_end >= dt (dt={dt}, t_end={t_end})")));
    }
    let d = system.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial condition has {} entries, system {} has dimension {d}",
            x0.len(),
            system.name()
        )));
    }
    let steps = (t_end / dt).round() as usize;
    let mut data = Vec::with_capacity((steps + 1) * d);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    data.extend_from_slice(&x);
    for step in 1..=steps {
        system.eval(&x, &mut k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        system.eval(&tmp, &mut k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        system.eval(&tmp, &mut k3);
        for i in 0..d {
            tmp[i] = x[i] + dt * k3[i];
        }
        system.eval(&tmp, &mut k4);
        for i in 0..d {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            return Err(Error::Diverged { time: step as f64 * dt, threshold: DIVERGENCE_THRESHOLD });
        }
        data.extend_from_slice(&x);
    }
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    Ok(Trajectory { times, states: Matrix::from_row_slice(steps + 1, d, &data), dt })
}

/// Attractor samples used to draw Rössler initial conditions: 100 s at
/// `dt = 0.002` from `(5, 3, 0)` with the first 10 s discarded.
fn rossler_reference() -> &'static Trajectory {
    static REF: OnceLock<Trajectory> = OnceLock::new();
    REF.get_or_init(|| {
        let sys = OdeSystem::builtin(SystemKind::Rossler);
        let traj = rk4_integrate(&sys, &Vector::from_vec(vec![5.0, 3.0, 0.0]), 100.0, 0.002)
            .expect("Rössler reference trajectory is bounded");
        let skip = (10.0 / 0.002) as usize;
        traj.slice(skip, traj.len())
    })
}

/// `‖X‖_F / √(n·d)`, the per-entry RMS used to scale noise.
pub fn rms(states: &Matrix) -> f64 {
    let count = (states.nrows() * states.ncols()).max(1) as f64;
    states.norm() / count.sqrt()
}

/// Draw an initial condition from the sampling volume of a built-in system.
pub fn sample_initial_condition(system: &OdeSystem, rng: &mut RngStream) -> Result<Vector> {
    let kind = system.kind().ok_or_else(|| Error::UnknownSystem(system.name().to_string()))?;
    let v = match kind {
        SystemKind::Lorenz => {
            vec![rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0), rng.uniform(10.0, 40.0)]
        }
        SystemKind::Hopf => {
            let r = rng.uniform(0.75, 1.25);
            let theta = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
            vec![r * theta.cos(), r * theta.sin()]
        }
        SystemKind::Mhd => (0..6).map(|_| rng.uniform(-1.5, 1.5)).collect(),
        SystemKind::Duffing => {
            let pi = std::f64::consts::PI;
            (0..4).map(|_| rng.uniform(-pi, pi)).collect()
        }
        SystemKind::VanDerPol => {
            let mu = system.parameter("mu").unwrap_or(3.0);
            vec![rng.uniform(-1.0, 1.0), rng.uniform(-mu, mu)]
        }
        SystemKind::Lotka => vec![rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)],
        SystemKind::Rossler => {
            let reference = rossler_reference();
            let row = reference.states.row(rng.index(reference.len()));
            let std = 0.1 * rms(&reference.states);
            let mut v: Vec<f64> = row.iter().map(|x| x + std * rng.normal()).collect();
            v[2] = v[2].abs();
            v
        }
    };
    Ok(Vector::from_vec(v))
}

/// Add i.i.d. Gaussian noise with standard deviation
/// `(percent / 100) · ‖X‖_F / √(n·d)` to every entry.
pub fn add_noise(traj: &Trajectory, percent: f64, rng: &mut RngStream) -> Trajectory {
    let mut out = traj.clone();
    if percent <= 0.0 {
        return out;
    }
    let std = percent / 100.0 * rms(&traj.states);
    for i in 0..out.states.nrows() {
        for j in 0..out.states.ncols() {
            out.states[(i, j)] += std * rng.normal();
        }
    }
    out
}
