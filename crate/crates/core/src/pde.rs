//! Spatiotemporal fields and pseudo-spectral simulation of the
//! Kuramoto–Sivashinsky and λ–ω reaction–diffusion benchmarks.
//!
//! Both solvers use ETDRK4 with contour-integral coefficients on a periodic
//! grid and 2/3-rule dealiasing of the nonlinear terms.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

const FIELD_MAGIC: &[u8; 8] = b"MIOFLD01";

/// A uniform spatial axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAxis {
    pub name: String,
    pub start: f64,
    pub spacing: f64,
    pub len: usize,
    pub periodic: bool,
}

impl SpatialAxis {
    pub fn periodic(name: &str, start: f64, length: f64, len: usize) -> Self {
        Self { name: name.into(), start, spacing: length / len as f64, len, periodic: true }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.spacing
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    /// Period of a periodic axis.
    pub fn length(&self) -> f64 {
        self.spacing * self.len as f64
    }
}

/// Values sampled on `times × axes…`, with `nvars` variables per point,
/// stored row-major in the order `(time, space…, variable)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub times: Vec<f64>,
    pub axes: Vec<SpatialAxis>,
    pub variables: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldSidecar {
    shape: Vec<usize>,
    times: Vec<f64>,
    axes: Vec<SpatialAxis>,
    variables: Vec<String>,
}

impl Field {
    pub fn new(
        times: Vec<f64>,
        axes: Vec<SpatialAxis>,
        variables: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let expected = times.len() * axes.iter().map(|a| a.len).product::<usize>() * variables.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "field expects {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(Self { times, axes, variables, values })
    }

    /// `(time, space…, variable)`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.times.len()];
        s.extend(self.axes.iter().map(|a| a.len));
        s.push(self.variables.len());
        s
    }

    pub fn nt(&self) -> usize {
        self.times.len()
    }

    pub fn nvars(&self) -> usize {
        self.variables.len()
    }

    /// Number of spatial points per time slice.
    pub fn npoints(&self) -> usize {
        self.axes.iter().map(|a| a.len).product()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 { self.times[1] - self.times[0] } else { 0.0 }
    }

    /// Flat index of `(t, spatial multi-index, var)`.
    pub fn index(&self, t: usize, point: usize, var: usize) -> usize {
        (t * self.npoints() + point) * self.nvars() + var
    }

    pub fn get(&self, t: usize, point: usize, var: usize) -> f64 {
        self.values[self.index(t, point, var)]
    }

    /// Single variable as a new field.
    pub fn variable(&self, var: usize) -> Field {
        let nv = self.nvars();
        Field {
            times: self.times.clone(),
            axes: self.axes.clone(),
            variables: vec![self.variables[var].clone()],
            values: self.values.iter().skip(var).step_by(nv).copied().collect(),
        }
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.values.len());
        Field { values, ..self.clone() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Time slice `t` of variable `var` over all spatial points.
    pub fn slice(&self, t: usize, var: usize) -> Vec<f64> {
        (0..self.npoints()).map(|p| self.get(t, p, var)).collect()
    }

    /// Leading `count` time slices.
    pub fn truncate_time(&self, start: usize, end: usize) -> Field {
        let per = self.npoints() * self.nvars();
        Field {
            times: self.times[start..end].to_vec(),
            axes: self.axes.clone(),
            variables: self.variables.clone(),
            values: self.values[start * per..end * per].to_vec(),
        }
    }

    /// Binary container (`MIOFLD01`, rank, shape, little-endian doubles) and a
    /// JSON sidecar `<path>.json` with the grid metadata.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        let sidecar = FieldSidecar {
            shape: self.shape(),
            times: self.times.clone(),
            axes: self.axes.clone(),
            variables: self.variables.clone(),
        };
        let json_path = sidecar_path(path);
        std::fs::write(json_path, serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar: FieldSidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let (shape, values) = read_binary(&mut f)?;
        if shape != sidecar.shape {
            return Err(Error::ShapeMismatch(format!(
                "binary shape {shape:?} disagrees with sidecar {:?}",
                sidecar.shape
            )));
        }
        Field::new(sidecar.times, sidecar.axes, sidecar.variables, values)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let shape = self.shape();
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for s in &shape {
            w.write_all(&(*s as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Read a binary field container, returning its shape and values.
pub fn read_binary<R: Read>(r: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::InvalidArgument("not a field container".into()));
    }
    let rank = read_u64(r)? as usize;
    if rank > 16 {
        return Err(Error::InvalidArgument(format!("implausible field rank {rank}")));
    }
    let shape: Vec<usize> = (0..rank).map(|_| read_u64(r).map(|v| v as usize)).collect::<Result<_>>()?;
    let count: usize = shape.iter().product();
    let mut values = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((shape, values))
}

/// Angular wavenumbers of an `n`-point periodic grid of period `length`,
/// in FFT order.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let base = 2.0 * PI / length;
    (0..n)
        .map(|i| {
            let m = if i <= n / 2 { i as isize } else { i as isize - n as isize };
            base * m as f64
        })
        .collect()
}

/// Signed integer mode numbers in FFT order.
fn mode_numbers(n: usize) -> Vec<isize> {
    (0..n).map(|i| if i <= n / 2 { i as isize } else { i as isize - n as isize }).collect()
}

/// Apply `f` to every 1-D line of `values` along dimension `dim` of `shape`.
fn for_each_line<F: FnMut(&mut [f64])>(values: &mut [f64], shape: &[usize], dim: usize, mut f: F) {
    let n = shape[dim];
    let stride: usize = shape[dim + 1..].iter().product();
    let outer: usize = shape[..dim].iter().product();
    let mut line = vec![0.0; n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (i, l) in line.iter_mut().enumerate() {
                *l = values[base + i * stride];
            }
            f(&mut line);
            for (i, l) in line.iter().enumerate() {
                values[base + i * stride] = *l;
            }
        }
    }
}

/// Exact spectral derivative of a periodic line.
struct SpectralDerivative {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    multiplier: Vec<Complex64>,
    buf: Vec<Complex64>,
}

impl SpectralDerivative {
    fn new(n: usize, length: f64, order: usize) -> Self {
        let mut planner = FftPlanner::new();
        let k = wavenumbers(n, length);
        let multiplier = k
            .iter()
            .enumerate()
            .map(|(i, &kk)| {
                // the Nyquist mode has no well-defined odd derivative
                if n.is_multiple_of(2) && i == n / 2 && order % 2 == 1 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, kk).powu(order as u32) / n as f64
                }
            })
            .collect();
        Self { fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n), multiplier, buf: vec![Complex64::default(); n] }
    }

    fn apply(&mut self, line: &mut [f64]) {
        for (b, v) in self.buf.iter_mut().zip(line.iter()) {
            *b = Complex64::new(*v, 0.0);
        }
        self.fwd.process(&mut self.buf);
        for (b, m) in self.buf.iter_mut().zip(&self.multiplier) {
            *b *= m;
        }
        self.inv.process(&mut self.buf);
        for (v, b) in line.iter_mut().zip(&self.buf) {
            *v = b.re;
        }
    }
}

/// Second-order finite difference, one-sided second-order stencils at the ends.
pub(crate) fn fd_first_derivative(line: &[f64], h: f64) -> Vec<f64> {
    let n = line.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let d = (line[1] - line[0]) / h;
            out[0] = d;
            out[1] = d;
        }
        return out;
    }
    out[0] = (-3.0 * line[0] + 4.0 * line[1] - line[2]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (line[i + 1] - line[i - 1]) / (2.0 * h);
    }
    out[n - 1] = (3.0 * line[n - 1] - 4.0 * line[n - 2] + line[n - 3]) / (2.0 * h);
    out
}

/// Derivative of order `order` (1..=4) along spatial axis `axis`: spectral on
/// periodic axes, repeated second-order differences otherwise.
pub fn spatial_derivative(field: &Field, axis: usize, order: usize) -> Result<Field> {
    if !(1..=4).contains(&order) {
        return Err(Error::OrderUnsupported(order));
    }
    if axis >= field.axes.len() {
        return Err(Error::InvalidArgument(format!("field has no spatial axis {axis}")));
    }
    let ax = &field.axes[axis];
    let shape = field.shape();
    let mut values = field.values.clone();
    if ax.periodic {
        let mut d = SpectralDerivative::new(ax.len, ax.length(), order);
        for_each_line(&mut values, &shape, axis + 1, |line| d.apply(line));
    } else {
        let h = ax.spacing;
        for_each_line(&mut values, &shape, axis + 1, |line| {
            let mut cur = line.to_vec();
            for _ in 0..order {
                cur = fd_first_derivative(&cur, h);
            }
            line.copy_from_slice(&cur);
        });
    }
    Ok(field.with_values(values))
}

/// Mixed derivative `∂^{orders[0]}_{axis0} ∂^{orders[1]}_{axis1} …` (zero
/// orders skipped).
pub fn mixed_derivative(field: &Field, orders: &[usize]) -> Result<Field> {
    let mut out = field.clone();
    for (axis, &o) in orders.iter().enumerate() {
        if o > 0 {
            out = spatial_derivative(&out, axis, o)?;
        }
    }
    Ok(out)
}

/// Multidimensional complex FFT over a row-major grid.
struct FftNd {
    shape: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            shape: shape.to_vec(),
            fwd: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inv: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let plans = if inverse { &self.inv } else { &self.fwd };
        for (dim, plan) in plans.iter().enumerate() {
            let n = self.shape[dim];
            let stride: usize = self.shape[dim + 1..].iter().product();
            let outer: usize = self.shape[..dim].iter().product();
            if stride == 1 {
                for chunk in data.chunks_mut(n) {
                    plan.process(chunk);
                }
                continue;
            }
            let mut line = vec![Complex64::default(); n];
            for o in 0..outer {
                for s in 0..stride {
                    let base = o * n * stride + s;
                    for i in 0..n {
                        line[i] = data[base + i * stride];
                    }
                    plan.process(&mut line);
                    for i in 0..n {
                        data[base + i * stride] = line[i];
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / self.len() as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// ETDRK4 coefficients for a real diagonal linear operator.
struct Etdrk4 {
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl Etdrk4 {
    /// Contour-integral evaluation (32 points on a unit circle around each
    /// `hL`) avoids the cancellation in the φ-functions near zero.
    fn new(lin: &[f64], h: f64) -> Self {
        const M: usize = 32;
        let roots: Vec<Complex64> = (1..=M)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / M as f64))
            .collect();
        let n = lin.len();
        let (mut q, mut f1, mut f2, mut f3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (mut sq, mut s1, mut s2, mut s3) =
                (Complex64::default(), Complex64::default(), Complex64::default(), Complex64::default());
            for r in &roots {
                let z = Complex64::new(h * lin[i], 0.0) + r;
                let ez = z.exp();
                let z3 = z * z * z;
                sq += ((z / 2.0).exp() - 1.0) / z;
                s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3;
                s2 += (2.0 + z + ez * (z - 2.0)) / z3;
                s3 += (-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3;
            }
            q[i] = h * (sq / M as f64).re;
            f1[i] = h * (s1 / M as f64).re;
            f2[i] = h * (s2 / M as f64).re;
            f3[i] = h * (s3 / M as f64).re;
        }
        Self {
            e: lin.iter().map(|l| (h * l).exp()).collect(),
            e2: lin.iter().map(|l| (h * l / 2.0).exp()).collect(),
            q,
            f1,
            f2,
            f3,
        }
    }

    /// One step on `nv` stacked variables, each `nm` modes long.
    fn step<N>(&self, v: &mut [Complex64], nm: usize, nonlinear: &mut N)
    where
        N: FnMut(&[Complex64], &mut [Complex64]),
    {
        let len = v.len();
        let (mut nv, mut na, mut nb, mut nc) =
            (vec![Complex64::default(); len], vec![Complex64::default(); len], vec![Complex64::default(); len], vec![Complex64::default(); len]);
        let mut a = vec![Complex64::default(); len];
        let mut b = vec![Complex64::default(); len];
        let mut c = vec![Complex64::default(); len];
        nonlinear(v, &mut nv);
        for i in 0..len {
            let m = i % nm;
            a[i] = v[i] * self.e2[m] + nv[i] * self.q[m];
        }
        nonlinear(&a, &mut na);
        for i in 0..len {
            let m = i % nm;
            b[i] = v[i] * self.e2[m] + na[i] * self.q[m];
        }
        nonlinear(&b, &mut nb);
        for i in 0..len {
            let m = i % nm;
            c[i] = a[i] * self.e2[m] + (nb[i] * 2.0 - nv[i]) * self.q[m];
        }
        nonlinear(&c, &mut nc);
        for i in 0..len {
            let m = i % nm;
            v[i] = v[i] * self.e[m]
                + nv[i] * self.f1[m]
                + (na[i] + nb[i]) * (2.0 * self.f2[m])
                + nc[i] * self.f3[m];
        }
    }
}

/// 2/3-rule mask over an N-d grid in FFT order.
fn dealias_mask(shape: &[usize]) -> Vec<bool> {
    let modes: Vec<Vec<isize>> = shape.iter().map(|&n| mode_numbers(n)).collect();
    let total: usize = shape.iter().product();
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            let mut keep = true;
            for d in (0..shape.len()).rev() {
                let i = rem % shape[d];
                rem /= shape[d];
                if 3 * modes[d][i].unsigned_abs() >= shape[d] {
                    keep = false;
                }
            }
            keep
        })
        .collect()
}

/// Settings shared by the spectral simulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSettings {
    /// Period of each spatial axis.
    pub domain_length: f64,
    /// Left end of each spatial axis.
    pub domain_start: f64,
    /// Largest internal ETDRK4 step; the step actually used divides `dt_out`.
    pub max_internal_dt: f64,
}

impl SpectralSettings {
    /// Chaotic KS benchmark domain `[0, 32π)`.
    pub fn kuramoto_sivashinsky() -> Self {
        Self { domain_length: 32.0 * PI, domain_start: 0.0, max_internal_dt: 0.025 }
    }

    /// Reaction–diffusion on `[−10, 10)²`.
    pub fn reaction_diffusion() -> Self {
        Self { domain_length: 20.0, domain_start: -10.0, max_internal_dt: 0.005 }
    }
}

fn check_power_of_two(n: usize) -> Result<()> {
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("grid size {n} must be a power of two >= 4")));
    }
    Ok(())
}

fn output_schedule(t_end: f64, dt_out: f64, max_dt: f64) -> Result<(usize, usize, f64)> {
    if !(dt_out > 0.0) || !(t_end >= dt_out) || !(max_dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dt_out <= t_end (dt_out={dt_out}, t_end={t_end})"
        )));
    }
    let outputs = (t_end / dt_out).round() as usize;
    let substeps = (dt_out / max_dt - 1e-9).ceil().max(1.0) as usize;
    Ok((outputs, substeps, dt_out / substeps as f64))
}

fn check_bounded(v: &[f64], time: f64) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || x.abs() > 1e6) {
        return Err(Error::Diverged { time, threshold: 1e6 });
    }
    Ok(())
}

/// Simulate `u_t = −u u_x − u_xx − u_xxxx` on a periodic grid with
/// `u0.len()` points, output every `dt_out` from `0` to `t_end`.
pub fn simulate_ks(u0: &[f64], t_end: f64, dt_out: f64, settings: &SpectralSettings) -> Result<Field> {
    let n = u0.len();
    check_power_of_two(n)?;
    let (outputs, substeps, h) = output_schedule(t_end, dt_out, settings.max_internal_dt)?;
    let k = wavenumbers(n, settings.domain_length);
    let lin: Vec<f64> = k.iter().map(|k| k * k - k.powi(4)).collect();
    let scheme = Etdrk4::new(&lin, h);
    let fft = FftNd::new(&[n]);
    let mask = dealias_mask(&[n]);
    let g: Vec<Complex64> = k.iter().map(|k| Complex64::new(0.0, -0.5 * k)).collect();
    let mut phys = vec![Complex64::default(); n];
    let mut nonlinear = |v: &[Complex64], out: &mut [Complex64]| {
        phys.copy_from_slice(v);
        fft.transform(&mut phys, true);
        for p in phys.iter_mut() {
            *p = Complex64::new(p.re * p.re, 0.0);
        }
        fft.transform(&mut phys, false);
        for i in 0..n {
            out[i] = if mask[i] { g[i] * phys[i] } else { Complex64::default() };
        }
    };

    let mut v: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.transform(&mut v, false);
    let mut values = Vec::with_capacity((outputs + 1) * n);
    values.extend_from_slice(u0);
    let mut tmp = vec![Complex64::default(); n];
    for out in 1..=outputs {
        for _ in 0..substeps {
            scheme.step(&mut v, n, &mut nonlinear);
        }
        tmp.copy_from_slice(&v);
        fft.transform(&mut tmp, true);
        let real: Vec<f64> = tmp.iter().map(|c| c.re).collect();
        check_bounded(&real, out as f64 * dt_out)?;
        values.extend_from_slice(&real);
    }
    let times = (0..=outputs).map(|i| i as f64 * dt_out).collect();
    let axis = SpatialAxis::periodic("x", settings.domain_start, settings.domain_length, n);
    Field::new(times, vec![axis], vec!["u".into()], values)
}

/// Simulate the λ–ω reaction–diffusion system
///
/// ```text
/// u_t = 0.1 Δu + u − u v² − u³ + v³ + u² v
/// v_t = 0.1 Δv + v − u v² − u³ − v³ − u² v
/// ```
///
/// on a periodic square grid; `u0`/`v0` are row-major `grid × grid` arrays
/// (first index `x`, second `y`).
pub fn simulate_reaction_diffusion(
    u0: &[f64],
    v0: &[f64],
    grid: usize,
    t_end: f64,
    dt_out: f64,
    settings: &SpectralSettings,
) -> Result<Field> {
    check_power_of_two(grid)?;
    let np = grid * grid;
    if u0.len() != np || v0.len() != np {
        return Err(Error::DimensionMismatch(format!(
            "initial fields must have {np} entries (got {}, {})",
            u0.len(),
            v0.len()
        )));
    }
    let (outputs, substeps, h) = output_schedule(t_end, dt_out, settings.max_internal_dt)?;
    let k = wavenumbers(grid, settings.domain_length);
    let lin: Vec<f64> = (0..np)
        .map(|i| {
            let (ix, iy) = (i / grid, i % grid);
            1.0 - 0.1 * (k[ix] * k[ix] + k[iy] * k[iy])
        })
        .collect();
    let scheme = Etdrk4::new(&lin, h);
    let fft = FftNd::new(&[grid, grid]);
    let mask = dealias_mask(&[grid, grid]);
    let mut pu = vec![Complex64::default(); np];
    let mut pv = vec![Complex64::default(); np];
    let mut nonlinear = |s: &[Complex64], out: &mut [Complex64]| {
        pu.copy_from_slice(&s[..np]);
        pv.copy_from_slice(&s[np..]);
        fft.transform(&mut pu, true);
        fft.transform(&mut pv, true);
        for i in 0..np {
            let (u, v) = (pu[i].re, pv[i].re);
            let r2 = u * u + v * v;
            // λ(A) = 1 − A², ω(A) = −A²; the linear `+u`, `+v` live in L
            pu[i] = Complex64::new(-r2 * u + r2 * v, 0.0);
            pv[i] = Complex64::new(-r2 * u - r2 * v, 0.0);
        }
        fft.transform(&mut pu, false);
        fft.transform(&mut pv, false);
        for i in 0..np {
            out[i] = if mask[i] { pu[i] } else { Complex64::default() };
            out[np + i] = if mask[i] { pv[i] } else { Complex64::default() };
        }
    };

    let mut state: Vec<Complex64> = u0.iter().chain(v0.iter()).map(|&x| Complex64::new(x, 0.0)).collect();
    fft.transform(&mut state[..np], false);
    fft.transform(&mut state[np..], false);
    let mut values = Vec::with_capacity((outputs + 1) * np * 2);
    let interleave = |values: &mut Vec<f64>, u: &[f64], v: &[f64]| {
        for i in 0..np {
            values.push(u[i]);
            values.push(v[i]);
        }
    };
    interleave(&mut values, u0, v0);
    let mut tu = vec![Complex64::default(); np];
    let mut tv = vec![Complex64::default(); np];
    for out in 1..=outputs {
        for _ in 0..substeps {
            scheme.step(&mut state, np, &mut nonlinear);
        }
        tu.copy_from_slice(&state[..np]);
        tv.copy_from_slice(&state[np..]);
        fft.transform(&mut tu, true);
        fft.transform(&mut tv, true);
        let ru: Vec<f64> = tu.iter().map(|c| c.re).collect();
        let rv: Vec<f64> = tv.iter().map(|c| c.re).collect();
        check_bounded(&ru, out as f64 * dt_out)?;
        check_bounded(&rv, out as f64 * dt_out)?;
        interleave(&mut values, &ru, &rv);
    }
    let times = (0..=outputs).map(|i| i as f64 * dt_out).collect();
    let axes = vec![
        SpatialAxis::periodic("x", settings.domain_start, settings.domain_length, grid),
        SpatialAxis::periodic("y", settings.domain_start, settings.domain_length, grid),
    ];
    Field::new(times, axes, vec!["u".into(), "v".into()], values)
}

/// `(cos(x̃ + r₀) + sin(4 r₁ x̃)) / Z` with `x̃` the grid mapped onto
/// `[0, 2π)`, `r₀, r₁ ~ U[0, 1]` and `Z` the sup norm.
pub fn sample_ks_initial(grid_points: usize, rng: &mut RngStream) -> Vec<f64> {
    let r0 = rng.uniform(0.0, 1.0);
    let r1 = rng.uniform(0.0, 1.0);
    let raw: Vec<f64> = (0..grid_points)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / grid_points as f64;
            (x + r0).cos() + (4.0 * r1 * x).sin()
        })
        .collect();
    let z = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    raw.into_iter().map(|v| v / z).collect()
}

/// Spiral `u₀ = tanh(r) cos(angle(X + iY) + o − s r)`, `v₀` with `sin`.
pub fn spiral_initial(grid: usize, settings: &SpectralSettings, s: f64, o: f64) -> (Vec<f64>, Vec<f64>) {
    let axis = SpatialAxis::periodic("x", settings.domain_start, settings.domain_length, grid);
    let c = axis.coords();
    let mut u = Vec::with_capacity(grid * grid);
    let mut v = Vec::with_capacity(grid * grid);
    for &x in &c {
        for &y in &c {
            let r = (x * x + y * y).sqrt();
            let phase = y.atan2(x) + o - s * r;
            u.push(r.tanh() * phase.cos());
            v.push(r.tanh() * phase.sin());
        }
    }
    (u, v)
}

/// Randomly rotated and scaled spiral, `s ~ U[0.95, 1.05]`, `o ~ U[0, 2π]`.
pub fn sample_spiral_initial(grid: usize, settings: &SpectralSettings, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
    let s = rng.uniform(0.95, 1.05);
    let o = rng.uniform(0.0, 2.0 * PI);
    spiral_initial(grid, settings, s, o)
}

/// Time derivative of every variable at every point (second-order differences).
pub fn time_derivative(field: &Field) -> Result<Field> {
    if field.nt() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: field.nt() });
    }
    let shape = field.shape();
    let mut values = field.values.clone();
    let dt = field.dt();
    for_each_line(&mut values, &shape, 0, |line| {
        let d = fd_first_derivative(line, dt);
        line.copy_from_slice(&d);
    });
    Ok(field.with_values(values))
}

/// The two benchmark PDEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeSystem {
    KuramotoSivashinsky,
    ReactionDiffusion,
}

/// One term of a PDE right-hand side: `coef · monomial · ∂^orders u_var`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeTerm {
    /// Equation (target variable) the term belongs to.
    pub target: usize,
    pub exponents: Vec<u32>,
    /// `(variable, per-axis orders)` of the derivative factor.
    pub derivative: Option<(usize, Vec<usize>)>,
    pub coef: f64,
}

impl PdeSystem {
    pub fn name(self) -> &'static str {
        match self {
            PdeSystem::KuramotoSivashinsky => "ks",
            PdeSystem::ReactionDiffusion => "reaction_diffusion",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "ks" | "kuramoto_sivashinsky" => Ok(PdeSystem::KuramotoSivashinsky),
            "rd" | "reaction_diffusion" => Ok(PdeSystem::ReactionDiffusion),
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }

    pub fn settings(self) -> SpectralSettings {
        match self {
            PdeSystem::KuramotoSivashinsky => SpectralSettings::kuramoto_sivashinsky(),
            PdeSystem::ReactionDiffusion => SpectralSettings::reaction_diffusion(),
        }
    }

    pub fn variables(self) -> Vec<String> {
        match self {
            PdeSystem::KuramotoSivashinsky => vec!["u".into()],
            PdeSystem::ReactionDiffusion => vec!["u".into(), "v".into()],
        }
    }

    pub fn axes(self) -> Vec<String> {
        match self {
            PdeSystem::KuramotoSivashinsky => vec!["x".into()],
            PdeSystem::ReactionDiffusion => vec!["x".into(), "y".into()],
        }
    }

    /// Right-hand sides as implemented by the simulators.
    pub fn true_terms(self) -> Vec<PdeTerm> {
        let t = |target, e: &[u32], d: Option<(usize, &[usize])>, coef| PdeTerm {
            target,
            exponents: e.to_vec(),
            derivative: d.map(|(v, o)| (v, o.to_vec())),
            coef,
        };
        match self {
            PdeSystem::KuramotoSivashinsky => vec![
                t(0, &[1], Some((0, &[1])), -1.0),
                t(0, &[0], Some((0, &[2])), -1.0),
                t(0, &[0], Some((0, &[4])), -1.0),
            ],
            PdeSystem::ReactionDiffusion => vec![
                t(0, &[0, 0], Some((0, &[2, 0])), 0.1),
                t(0, &[0, 0], Some((0, &[0, 2])), 0.1),
                t(0, &[1, 0], None, 1.0),
                t(0, &[1, 2], None, -1.0),
                t(0, &[3, 0], None, -1.0),
                t(0, &[0, 3], None, 1.0),
                t(0, &[2, 1], None, 1.0),
                t(1, &[0, 0], Some((1, &[2, 0])), 0.1),
                t(1, &[0, 0], Some((1, &[0, 2])), 0.1),
                t(1, &[0, 1], None, 1.0),
                t(1, &[1, 2], None, -1.0),
                t(1, &[3, 0], None, -1.0),
                t(1, &[0, 3], None, -1.0),
                t(1, &[2, 1], None, -1.0),
            ],
        }
    }

    /// Simulate from a sampled initial condition.
    pub fn simulate(self, grid: usize, t_end: f64, dt_out: f64, rng: &mut RngStream) -> Result<(Vec<f64>, Field)> {
        let settings = self.settings();
        match self {
            PdeSystem::KuramotoSivashinsky => {
                let u0 = sample_ks_initial(grid, rng);
                let field = simulate_ks(&u0, t_end, dt_out, &settings)?;
                Ok((u0, field))
            }
            PdeSystem::ReactionDiffusion => {
                let (u0, v0) = sample_spiral_initial(grid, &settings, rng);
                let field = simulate_reaction_diffusion(&u0, &v0, grid, t_end, dt_out, &settings)?;
                Ok((u0.into_iter().chain(v0).collect(), field))
            }
        }
    }
}

/// Add white Gaussian noise with std `percent`% of the RMS over all values.
pub fn add_field_noise(field: &Field, percent: f64, rng: &mut RngStream) -> Field {
    if percent <= 0.0 || field.values.is_empty() {
        return field.clone();
    }
    let rms = (field.values.iter().map(|v| v * v).sum::<f64>() / field.values.len() as f64).sqrt();
    let std = percent / 100.0 * rms;
    field.with_values(field.values.iter().map(|v| v + std * rng.normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn periodic_line(n: usize, length: f64, f: impl Fn(f64) -> f64) -> Field {
        let axis = SpatialAxis::periodic("x", 0.0, length, n);
        let vals = axis.coords().into_iter().map(f).collect();
        Field::new(vec![0.0], vec![axis], vec!["u".into()], vals).unwrap()
    }

    #[test]
    fn spectral_derivatives_of_sine() {
        let f = periodic_line(64, 2.0 * PI, f64::sin);
        let d1 = spatial_derivative(&f, 0, 1).unwrap();
        let d4 = spatial_derivative(&f, 0, 4).unwrap();
        for (i, x) in f.axes[0].coords().into_iter().enumerate() {
            assert!((d1.values[i] - x.cos()).abs() < 1e-8);
            assert!((d4.values[i] - x.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let f = periodic_line(32, 5.0, |_| 3.5);
        for order in 1..=4 {
            let d = spatial_derivative(&f, 0, order).unwrap();
            assert!(d.max_abs() < 1e-12);
        }
        let mut np = f.clone();
        np.axes[0].periodic = false;
        assert!(spatial_derivative(&np, 0, 2).unwrap().max_abs() < 1e-12);
        assert!(matches!(spatial_derivative(&f, 0, 5), Err(Error::OrderUnsupported(5))));
        assert!(matches!(spatial_derivative(&f, 0, 0), Err(Error::OrderUnsupported(0))));
    }

    #[test]
    fn nonperiodic_fd_is_exact_on_quadratics() {
        let axis = SpatialAxis { name: "x".into(), start: 0.0, spacing: 0.1, len: 20, periodic: false };
        let vals: Vec<f64> = axis.coords().iter().map(|x| 2.0 * x * x + x).collect();
        let f = Field::new(vec![0.0], vec![axis.clone()], vec!["u".into()], vals).unwrap();
        let d = spatial_derivative(&f, 0, 1).unwrap();
        for (i, x) in axis.coords().iter().enumerate() {
            assert!((d.values[i] - (4.0 * x + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_is_linear() {
        let mut rng = RngStream::new(2);
        let a: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let fa = periodic_line(64, 10.0, |_| 0.0).with_values(a.clone());
        let fb = fa.with_values(b.clone());
        let mix = fa.with_values(a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect());
        for order in 1..=4 {
            let da = spatial_derivative(&fa, 0, order).unwrap();
            let db = spatial_derivative(&fb, 0, order).unwrap();
            let dm = spatial_derivative(&mix, 0, order).unwrap();
            let scale = dm.max_abs().max(1.0);
            for i in 0..64 {
                let lin = 2.0 * da.values[i] - 3.0 * db.values[i];
                assert!((dm.values[i] - lin).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn derivative_along_second_axis() {
        let grid = 16;
        let s = SpectralSettings { domain_length: 2.0 * PI, domain_start: 0.0, max_internal_dt: 0.1 };
        let axes = vec![
            SpatialAxis::periodic("x", 0.0, s.domain_length, grid),
            SpatialAxis::periodic("y", 0.0, s.domain_length, grid),
        ];
        let c = axes[0].coords();
        let mut vals = Vec::new();
        for &x in &c {
            for &y in &c {
                vals.push(x.sin() * (2.0 * y).cos());
            }
        }
        let f = Field::new(vec![0.0], axes, vec!["u".into()], vals).unwrap();
        let dy = spatial_derivative(&f, 1, 1).unwrap();
        let dxy = mixed_derivative(&f, &[1, 1]).unwrap();
        let mut idx = 0;
        for &x in &c {
            for &y in &c {
                assert!((dy.values[idx] + 2.0 * x.sin() * (2.0 * y).sin()).abs() < 1e-10);
                assert!((dxy.values[idx] + 2.0 * x.cos() * (2.0 * y).sin()).abs() < 1e-10);
                idx += 1;
            }
        }
    }

    #[test]
    fn ks_zero_is_fixed_point() {
        let f = simulate_ks(&vec![0.0; 64], 2.0, 0.5, &SpectralSettings::kuramoto_sivashinsky()).unwrap();
        assert_eq!(f.nt(), 5);
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn ks_decays_on_stable_domain() {
        let settings = SpectralSettings { domain_length: 2.0 * PI, domain_start: 0.0, max_internal_dt: 0.01 };
        let n = 64;
        let u0: Vec<f64> = (0..n).map(|i| 0.1 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let f = simulate_ks(&u0, 10.0, 0.5, &settings).unwrap();
        let last = f.slice(f.nt() - 1, 0);
        let m0 = u0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let m1 = last.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(m1 < m0, "{m1} !< {m0}");
    }

    #[test]
    fn ks_conserves_mean() {
        let settings = SpectralSettings::kuramoto_sivashinsky();
        let n = 128;
        let mut rng = RngStream::new(1);
        let u0: Vec<f64> = sample_ks_initial(n, &mut rng).into_iter().map(|v| v + 0.5).collect();
        let f = simulate_ks(&u0, 10.0, 1.0, &settings).unwrap();
        let mean0: f64 = u0.iter().sum::<f64>() / n as f64;
        for t in 0..f.nt() {
            let m: f64 = f.slice(t, 0).iter().sum::<f64>() / n as f64;
            assert!(((m - mean0) / mean0).abs() < 1e-6);
        }
    }

    #[test]
    fn ks_temporal_convergence() {
        let mut rng = RngStream::new(4);
        let u0 = sample_ks_initial(128, &mut rng);
        let coarse = SpectralSettings::kuramoto_sivashinsky();
        let fine = SpectralSettings { max_internal_dt: coarse.max_internal_dt / 2.0, ..coarse.clone() };
        let a = simulate_ks(&u0, 1.0, 1.0, &coarse).unwrap();
        let b = simulate_ks(&u0, 1.0, 1.0, &fine).unwrap();
        let ua = a.slice(1, 0);
        let ub = b.slice(1, 0);
        let diff = ua.iter().zip(&ub).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm = ub.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff / norm <= 1e-5, "{}", diff / norm);
    }

    #[test]
    fn ks_initial_condition_is_normalized() {
        let mut rng = RngStream::new(3);
        let u = sample_ks_initial(256, &mut rng);
        let m = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reaction_diffusion_zero_is_fixed_point() {
        let z = vec![0.0; 16 * 16];
        let f = simulate_reaction_diffusion(&z, &z, 16, 0.2, 0.1, &SpectralSettings::reaction_diffusion()).unwrap();
        assert_eq!(f.max_abs(), 0.0);
        assert_eq!(f.shape(), vec![3, 16, 16, 2]);
    }

    #[test]
    fn spiral_stays_bounded_and_smooth() {
        let settings = SpectralSettings::reaction_diffusion();
        let grid = 64;
        let (u0, v0) = spiral_initial(grid, &settings, 1.0, 0.0);
        let f = simulate_reaction_diffusion(&u0, &v0, grid, 5.0, 0.05, &settings).unwrap();
        assert!(f.max_abs() <= 1.1, "{}", f.max_abs());
        // spatial mean of u² + v²
        let energy: Vec<f64> = (0..f.nt())
            .map(|t| {
                let u = f.slice(t, 0);
                let v = f.slice(t, 1);
                u.iter().zip(&v).map(|(a, b)| a * a + b * b).sum::<f64>() / u.len() as f64
            })
            .collect();
        let start = (1.0 / 0.05) as usize;
        for w in energy[start..].windows(2) {
            assert!(((w[1] - w[0]) / w[0]).abs() < 0.1);
        }
    }

    #[test]
    fn field_binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let settings = SpectralSettings::reaction_diffusion();
        let (u0, v0) = spiral_initial(8, &settings, 1.0, 0.3);
        let f = simulate_reaction_diffusion(&u0, &v0, 8, 0.1, 0.05, &settings).unwrap();
        let path = dir.path().join("rd.bin");
        f.save(&path).unwrap();
        assert!(dir.path().join("rd.bin.json").exists());
        let back = Field::load(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn field_noise_matches_requested_level() {
        let f = periodic_line(1 << 16, 200.0 * PI, |x| 2.0 * x.sin());
        let noisy = add_field_noise(&f, 5.0, &mut RngStream::new(3));
        let diff: Vec<f64> = noisy.values.iter().zip(&f.values).map(|(a, b)| a - b).collect();
        let std = (diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64).sqrt();
        // rms of 2 sin x is √2
        assert!((std / (0.05 * 2f64.sqrt()) - 1.0).abs() < 0.02);
        assert_eq!(add_field_noise(&f, 0.0, &mut RngStream::new(3)), f);
    }
}
