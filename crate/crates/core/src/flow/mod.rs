//! Pathwise solution of `X_t = x + int_s^t b(u, X_u) du + B_t - B_s`.
//!
//! All solvers work on the transformed equation `Z' = b(t, Z + B_t)` with
//! `Z = X - B`, so the noise never enters through a stochastic integral and
//! explicit Euler is exact for constant drifts.

mod drift;

pub use drift::{mollifier, mollifier_cdf, mollifier_derivative, Drift, DriftField, DriftKind, Mollified, MAX_DIM};

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, Kernel};
use crate::grid::TimeGrid;
use crate::table::Table;

/// `b*(t, x) = b(t, x + B_t)` with `B` linearly interpolated between nodes.
pub struct TransformedDrift<'a> {
    base: &'a dyn DriftField,
    path: &'a FbmPath,
}

impl<'a> TransformedDrift<'a> {
    pub fn new(base: &'a dyn DriftField, path: &'a FbmPath) -> Result<Self> {
        check_dims(base, path.dim())?;
        Ok(Self { base, path })
    }

    fn shifted(&self, t: f64, x: &[f64], buf: &mut [f64; MAX_DIM]) {
        let d = x.len();
        self.path.value_at(t, &mut buf[..d]);
        for k in 0..d {
            buf[k] += x[k];
        }
    }
}

impl DriftField for TransformedDrift<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut y = [0.0; MAX_DIM];
        self.shifted(t, x, &mut y);
        self.base.eval(t, &y[..x.len()], out);
    }

    fn sup_norm(&self) -> f64 {
        self.base.sup_norm()
    }

    fn l1_norm(&self) -> f64 {
        self.base.l1_norm()
    }

    fn kind(&self) -> DriftKind {
        self.base.kind()
    }

    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut y = [0.0; MAX_DIM];
        self.shifted(t, x, &mut y);
        self.base.jacobian(t, &y[..x.len()], out)
    }

    fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut y = [0.0; MAX_DIM];
        self.shifted(t, x, &mut y);
        self.base.hessian(t, &y[..x.len()], out)
    }

    fn name(&self) -> String {
        format!("{}[x + {}]", self.base.name(), self.path.id())
    }
}

fn check_dims(drift: &dyn DriftField, d: usize) -> Result<()> {
    if drift.dim() != d {
        return Err(Error::Dimension(format!("drift dimension {} vs state dimension {d}", drift.dim())));
    }
    if d == 0 || d > MAX_DIM {
        return Err(Error::Dimension(format!("dimension {d} outside 1..={MAX_DIM}")));
    }
    Ok(())
}

/// One solution path `X^{s,x}` on a uniform grid starting at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    x0: Vec<f64>,
    /// Row-major `(n + 1) x d`.
    states: Vec<f64>,
    path_id: String,
    scheme: &'static str,
}

impl Trajectory {
    /// Trajectory that stays at `value` for all times (Picard initial guesses).
    pub fn constant(grid: TimeGrid, x0: Vec<f64>, value: &[f64]) -> Self {
        let states = (0..grid.len()).flat_map(|_| value.to_vec()).collect();
        Self { grid, x0, states, path_id: String::new(), scheme: "constant" }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn start(&self) -> &[f64] {
        &self.x0
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.grid.n_steps())
    }

    pub fn path_id(&self) -> &str {
        &self.path_id
    }

    pub fn scheme(&self) -> &str {
        self.scheme
    }

    /// `max_i |X_i - Y_i|` (Euclidean norm per node).
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        sup_dist(&self.states, &other.states, self.dim())
    }

    pub fn to_table(&self) -> Table {
        let d = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        let mut t = Table::new(header);
        t.meta("path", &self.path_id).meta("scheme", self.scheme).meta("n_steps", self.grid.n_steps());
        for i in 0..self.grid.len() {
            let mut row = vec![self.grid.node(i)];
            row.extend_from_slice(self.state(i));
            t.push_f64(&row);
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }
}

fn sup_dist(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d)
        .zip(b.chunks(d))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Explicit Euler for the transformed state `Xhat_t = X_t - (B_t - B_s)`,
/// which solves `Xhat' = b(t, Xhat + B_t - B_s)`, `Xhat(s) = x`.
///
/// Two solutions driven by the same path differ by exactly
/// `Xhat^x - Xhat^y`, with no rounding from the noise.
pub fn solve_transformed(drift: &dyn DriftField, x: &[f64], s: f64, path: &FbmPath, n_steps: usize) -> Result<Trajectory> {
    let (grid, bvals) = forward_setup(drift, x, s, path, n_steps)?;
    let d = x.len();
    let dt = grid.dt();
    let mut states = vec![0.0; grid.len() * d];
    let mut z = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    let mut b = [0.0; MAX_DIM];
    z[..d].copy_from_slice(x);
    for i in 0..grid.len() {
        states[i * d..(i + 1) * d].copy_from_slice(&z[..d]);
        if i == n_steps {
            break;
        }
        for k in 0..d {
            y[k] = z[k] + (bvals[i * d + k] - bvals[k]);
        }
        drift.eval(grid.node(i), &y[..d], &mut b[..d]);
        for k in 0..d {
            z[k] += dt * b[k];
        }
    }
    Ok(Trajectory { grid, x0: x.to_vec(), states, path_id: path.id(), scheme: "euler-shifted" })
}

fn forward_setup(drift: &dyn DriftField, x: &[f64], s: f64, path: &FbmPath, n_steps: usize) -> Result<(TimeGrid, Vec<f64>)> {
    check_dims(drift, x.len())?;
    check_dims(drift, path.dim())?;
    let grid = TimeGrid::new(s, path.grid().horizon(), n_steps)?;
    if s < path.grid().t0() {
        return Err(Error::Grid(format!("start {s} precedes the path grid")));
    }
    let bvals = path.sample_on(&grid);
    Ok((grid, bvals))
}

/// Explicit Euler for `X_t = x + int_s^t b(u, X_u) du + B_t - B_s` on
/// `n_steps` uniform steps of `[s, T]`.
pub fn solve_forward(drift: &dyn DriftField, x: &[f64], s: f64, path: &FbmPath, n_steps: usize) -> Result<Trajectory> {
    let (_, bvals) = forward_setup(drift, x, s, path, n_steps)?;
    let mut tr = solve_transformed(drift, x, s, path, n_steps)?;
    let d = x.len();
    for (i, st) in tr.states.chunks_mut(d).enumerate().skip(1) {
        for k in 0..d {
            st[k] += bvals[i * d + k] - bvals[k];
        }
    }
    tr.scheme = "euler-transformed";
    Ok(tr)
}

/// Result of a converged Picard iteration.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub iterations: usize,
    /// `sup |Phi(Y) - Y|` at the returned iterate.
    pub residual: f64,
    /// Residual history, one entry per evaluated iterate.
    pub history: Vec<f64>,
}

/// Fixed-point iteration `Y <- x + int_s^. b(u, Y_u) du + B_. - B_s` with
/// left-rectangle quadrature, started from `init`.
///
/// Stops at the first iterate `Y_k` with `sup |Phi(Y_k) - Y_k| < tol`.
pub fn picard_solve(
    drift: &dyn DriftField,
    x: &[f64],
    path: &FbmPath,
    init: &Trajectory,
    max_iter: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    let d = x.len();
    check_dims(drift, d)?;
    if init.dim() != d {
        return Err(Error::Dimension("initial guess has the wrong dimension".into()));
    }
    let grid = *init.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let bvals = path.sample_on(&grid);
    let phi = |y: &[f64], out: &mut [f64]| {
        let mut acc = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        for i in 0..=n {
            for k in 0..d {
                out[i * d + k] = x[k] + acc[k] + (bvals[i * d + k] - bvals[k]);
            }
            if i < n {
                drift.eval(grid.node(i), &y[i * d..(i + 1) * d], &mut b[..d]);
                for k in 0..d {
                    acc[k] += b[k] * dt;
                }
            }
        }
    };
    let mut y = init.states.clone();
    let mut next = vec![0.0; y.len()];
    let mut history = Vec::new();
    let make = |states: Vec<f64>| Trajectory {
        grid,
        x0: x.to_vec(),
        states,
        path_id: path.id(),
        scheme: "picard-left-rectangle",
    };
    for k in 0..=max_iter {
        phi(&y, &mut next);
        let residual = sup_dist(&y, &next, d);
        history.push(residual);
        if residual < tol {
            return Ok(PicardOutcome { trajectory: make(y), iterations: k, residual, history });
        }
        if k == max_iter {
            return Err(Error::NonConvergence { iterations: k, residual, last: Box::new(make(y)) });
        }
        std::mem::swap(&mut y, &mut next);
    }
    unreachable!()
}

/// `Yhat^x_t`: the point sent to `x` at time `t` by the transformed flow,
/// obtained by integrating `dZ/ds = -b*(t - s, Z)`, `Z(0) = x` over `[0, t]`.
pub fn inverse_flow(drift: &dyn DriftField, x: &[f64], t: f64, path: &FbmPath, n_steps: usize) -> Result<Vec<f64>> {
    let d = x.len();
    check_dims(drift, d)?;
    check_dims(drift, path.dim())?;
    if n_steps == 0 {
        return Err(Error::Grid("n_steps must be >= 1".into()));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time {t} must be nonnegative")));
    }
    let star = TransformedDrift { base: drift, path };
    let h = t / n_steps as f64;
    let mut z = x.to_vec();
    let mut b = [0.0; MAX_DIM];
    for k in 0..n_steps {
        let u = t - k as f64 * h;
        star.eval(u, &z, &mut b[..d]);
        for j in 0..d {
            z[j] -= h * b[j];
        }
    }
    Ok(z)
}

/// Flow `x -> X^{0,x}` over a set of starting points.
#[derive(Debug, Clone)]
pub struct FlowField {
    xgrid: Vec<Vec<f64>>,
    tgrid: TimeGrid,
    trajectories: Vec<Trajectory>,
    variational: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl FlowField {
    pub fn xgrid(&self) -> &[Vec<f64>] {
        &self.xgrid
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn variational(&self) -> Option<&[Vec<DMatrix<f64>>]> {
        self.variational.as_deref()
    }

    /// Attaches `dX/dx` along every trajectory.
    pub fn with_variational(mut self, drift: &dyn DriftField) -> Result<Self> {
        let v = self.trajectories.iter().map(|t| variational_derivative(drift, t)).collect::<Result<Vec<_>>>()?;
        self.variational = Some(v);
        Ok(self)
    }

    /// Long format `x0_index,t,x1..xd`.
    pub fn to_table(&self) -> Table {
        let d = self.xgrid.first().map_or(0, Vec::len);
        let mut header = vec!["x0_index".to_string(), "t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        let mut t = Table::new(header);
        t.meta("n_starts", self.xgrid.len()).meta("n_steps", self.tgrid.n_steps());
        if let Some(tr) = self.trajectories.first() {
            t.meta("path", tr.path_id());
        }
        for (idx, tr) in self.trajectories.iter().enumerate() {
            for i in 0..tr.grid.len() {
                let mut row = vec![idx.to_string(), tr.grid.node(i).to_string()];
                row.extend(tr.state(i).iter().map(|v| v.to_string()));
                t.push(row);
            }
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }
}

/// Forward solves from every point of `xgrid` on `[t0, T]` of the path grid.
pub fn flow_grid(drift: &dyn DriftField, xgrid: &[Vec<f64>], path: &FbmPath, n_steps: usize) -> Result<FlowField> {
    if xgrid.is_empty() {
        return Err(Error::Domain("flow grid needs at least one start point".into()));
    }
    let s = path.grid().t0();
    let trajectories = xgrid.iter().map(|x| solve_forward(drift, x, s, path, n_steps)).collect::<Result<Vec<_>>>()?;
    let tgrid = *trajectories[0].grid();
    Ok(FlowField { xgrid: xgrid.to_vec(), tgrid, trajectories, variational: None })
}

fn require_smooth(drift: &dyn DriftField) -> Result<()> {
    if drift.kind() != DriftKind::Smooth {
        return Err(Error::NotSmooth(drift.name()));
    }
    Ok(())
}

/// Euler solution of `J' = Db(t, X_t) J`, `J(s) = I`, along a trajectory.
pub fn variational_derivative(drift: &dyn DriftField, traj: &Trajectory) -> Result<Vec<DMatrix<f64>>> {
    require_smooth(drift)?;
    let d = traj.dim();
    check_dims(drift, d)?;
    let grid = traj.grid;
    let dt = grid.dt();
    let mut jac = vec![0.0; d * d];
    let mut out = Vec::with_capacity(grid.len());
    let mut j = DMatrix::<f64>::identity(d, d);
    out.push(j.clone());
    for i in 0..grid.n_steps() {
        drift.jacobian(grid.node(i), traj.state(i), &mut jac)?;
        let db = DMatrix::from_row_slice(d, d, &jac);
        j += (&db * &j) * dt;
        out.push(j.clone());
    }
    Ok(out)
}

/// Kernel data for Malliavin derivatives on a grid: for each `theta = t_m`,
/// the values `K_H(t_k, theta)` and cell integrals `int_{t_k}^{t_{k+1}} K_H(u, theta) du`.
#[derive(Debug, Clone)]
pub struct MalliavinKernel {
    grid: TimeGrid,
    kernel: Kernel,
    /// Indexed `[m][k - m]` for `k = m..=n`.
    values: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
}

impl MalliavinKernel {
    /// Tables for every interior `theta` node `m = 1..n-1`.
    pub fn new(grid: TimeGrid, hurst: f64) -> Result<Self> {
        let kernel = Kernel::new(hurst)?;
        let n = grid.n_steps();
        let mut values = vec![Vec::new(); n + 1];
        let mut cells = vec![Vec::new(); n + 1];
        for m in 1..n {
            let (v, c) = Self::column(&kernel, &grid, m);
            values[m] = v;
            cells[m] = c;
        }
        Ok(Self { grid, kernel, values, cells })
    }

    fn column(kernel: &Kernel, grid: &TimeGrid, m: usize) -> (Vec<f64>, Vec<f64>) {
        let n = grid.n_steps();
        let theta = grid.node(m);
        // K(theta, theta) is infinite; the source term is taken as 0 there
        let mut values = vec![0.0];
        values.extend((m + 1..=n).map(|k| kernel.eval(grid.node(k), theta)));
        let cells = (m..n).map(|k| kernel.cell_integral_in_t(grid.node(k), grid.node(k + 1), theta)).collect();
        (values, cells)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.kernel.hurst()
    }

    /// `D_theta X_{t_k}` for `theta = t_m`, flat `d x d` row-major per node
    /// `k = 0..=n`; zero for `k <= m`.
    pub fn apply(&self, drift: &dyn DriftField, traj: &Trajectory, m: usize) -> Result<Vec<f64>> {
        if traj.grid != self.grid {
            return Err(Error::Grid("trajectory grid differs from the kernel tables".into()));
        }
        let n = self.grid.n_steps();
        if m == 0 || m >= n {
            return Err(Error::Domain(format!("theta index {m} must lie strictly inside 0..{n}")));
        }
        malliavin_recursion(drift, traj, m, &self.values[m], &self.cells[m])
    }
}

impl MalliavinKernel {
    /// `D_{t_m} X_T` for every interior `m`, flat `d x d` per `m = 0..=n`
    /// (zero at `m = 0` and `m = n`). Jacobians are evaluated once per node.
    pub fn terminal(&self, drift: &dyn DriftField, traj: &Trajectory) -> Result<Vec<f64>> {
        if traj.grid != self.grid {
            return Err(Error::Grid("trajectory grid differs from the kernel tables".into()));
        }
        let d = traj.dim();
        let dd = d * d;
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        let mut jacs = vec![0.0; n * dd];
        for k in 0..n {
            drift.jacobian(self.grid.node(k), traj.state(k), &mut jacs[k * dd..(k + 1) * dd])?;
        }
        let mut out = vec![0.0; (n + 1) * dd];
        let mut r = vec![0.0; dd];
        let mut tmp = vec![0.0; dd];
        for m in 1..n {
            let (kv, kc) = (&self.values[m], &self.cells[m]);
            r.iter_mut().for_each(|v| *v = 0.0);
            for k in m..n {
                let jac = &jacs[k * dd..(k + 1) * dd];
                for i in 0..d {
                    for j in 0..d {
                        tmp[i * d + j] = r[i * d + j] * dt + if i == j { kc[k - m] } else { 0.0 };
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        r[i * d + j] += (0..d).map(|l| jac[i * d + l] * tmp[l * d + j]).sum::<f64>();
                    }
                }
            }
            let kval = kv[n - m];
            for i in 0..d {
                for j in 0..d {
                    out[m * dd + i * d + j] = r[i * d + j] + if i == j { kval } else { 0.0 };
                }
            }
        }
        Ok(out)
    }
}

fn malliavin_recursion(drift: &dyn DriftField, traj: &Trajectory, m: usize, kv: &[f64], kc: &[f64]) -> Result<Vec<f64>> {
    let d = traj.dim();
    let dd = d * d;
    let grid = traj.grid;
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut out = vec![0.0; (n + 1) * dd];
    // R_k = int_theta^{t_k} Db M du, M_k = K(t_k, theta) I + R_k
    let mut r = vec![0.0; dd];
    let mut jac = vec![0.0; dd];
    let mut tmp = vec![0.0; dd];
    for k in m..=n {
        let kval = kv[k - m];
        for i in 0..d {
            for j in 0..d {
                out[k * dd + i * d + j] = r[i * d + j] + if i == j { kval } else { 0.0 };
            }
        }
        if k == n {
            break;
        }
        drift.jacobian(grid.node(k), traj.state(k), &mut jac)?;
        // tmp = C_k I + R_k dt
        for i in 0..d {
            for j in 0..d {
                tmp[i * d + j] = r[i * d + j] * dt + if i == j { kc[k - m] } else { 0.0 };
            }
        }
        for i in 0..d {
            for j in 0..d {
                r[i * d + j] += (0..d).map(|l| jac[i * d + l] * tmp[l * d + j]).sum::<f64>();
            }
        }
    }
    Ok(out)
}

/// `D_theta X_t` along `traj` for a grid node `theta` strictly inside the
/// grid, one matrix per node (zero for `t <= theta`).
pub fn malliavin_derivative(
    drift: &dyn DriftField,
    traj: &Trajectory,
    theta: f64,
    hurst: f64,
) -> Result<Vec<DMatrix<f64>>> {
    require_smooth(drift)?;
    let d = traj.dim();
    check_dims(drift, d)?;
    let grid = traj.grid;
    let n = grid.n_steps();
    let m = grid
        .index_of(theta)
        .ok_or_else(|| Error::Domain(format!("theta = {theta} is not a grid node")))?;
    if m == 0 || m >= n || grid.node(m) <= 0.0 {
        return Err(Error::Domain(format!("theta = {theta} must lie strictly inside (0, T)")));
    }
    let kernel = Kernel::new(hurst)?;
    let (kv, kc) = MalliavinKernel::column(&kernel, &grid, m);
    let flat = malliavin_recursion(drift, traj, m, &kv, &kc)?;
    Ok(flat.chunks(d * d).map(|c| DMatrix::from_row_slice(d, d, c)).collect())
}
