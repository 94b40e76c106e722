//! Linear transport `du/dt + b*(t, x) . grad u = 0` solved by characteristics,
//! `u(t, x) = u0(Yhat^x_t)`, with a weak-form residual checker and an
//! upwind finite-difference oracle.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fbm::FbmPath;
use crate::flow::{inverse_flow, DriftField, TransformedDrift, MAX_DIM};
use crate::grid::TimeGrid;
use crate::stats::pairwise_sum;
use crate::table::Table;

/// Uniform lattice `origin + h * (i_1, ..., i_d)`, `0 <= i_k < extents[k]`,
/// enumerated with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    origin: Vec<f64>,
    spacing: f64,
    extents: Vec<usize>,
}

impl Lattice {
    pub fn new(origin: Vec<f64>, spacing: f64, extents: Vec<usize>) -> Result<Self> {
        if origin.is_empty() || origin.len() != extents.len() || origin.len() > MAX_DIM {
            return Err(Error::Dimension("lattice origin and extents must share a dimension in 1..=8".into()));
        }
        if !(spacing > 0.0) || extents.iter().any(|e| *e < 2) {
            return Err(Error::Grid("lattice needs positive spacing and at least 2 points per axis".into()));
        }
        Ok(Self { origin, spacing, extents })
    }

    /// `n` points per axis covering `[lo, hi]^d` including the endpoints.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::Grid("cube lattice needs hi > lo and n >= 2".into()));
        }
        Self::new(vec![lo; dim], (hi - lo) / (n - 1) as f64, vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of flat index `p`.
    pub fn multi_index(&self, mut p: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            out[k] = p % self.extents[k];
            p /= self.extents[k];
        }
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.extents[axis + 1..].iter().product()
    }

    pub fn point(&self, p: usize, out: &mut [f64]) {
        let mut idx = [0usize; MAX_DIM];
        self.multi_index(p, &mut idx);
        for k in 0..self.dim() {
            out[k] = self.origin[k] + self.spacing * idx[k] as f64;
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|p| {
                let mut x = vec![0.0; self.dim()];
                self.point(p, &mut x);
                x
            })
            .collect()
    }

    /// Upper corner of the lattice.
    pub fn upper(&self) -> Vec<f64> {
        self.origin.iter().zip(&self.extents).map(|(o, e)| o + self.spacing * (*e - 1) as f64).collect()
    }

    /// Trapezoid weights `h^d prod_k w_k`.
    pub fn trapezoid_weight(&self, p: usize) -> f64 {
        let mut idx = [0usize; MAX_DIM];
        self.multi_index(p, &mut idx);
        let mut w = self.spacing.powi(self.dim() as i32);
        for k in 0..self.dim() {
            if idx[k] == 0 || idx[k] + 1 == self.extents[k] {
                w *= 0.5;
            }
        }
        w
    }
}

/// Smooth scalar field with analytic gradient.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// `amp * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub amp: f64,
    pub center: Vec<f64>,
    pub width: f64,
}

impl ScalarField for Gaussian {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        self.amp * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let v = self.value(x);
        let w2 = self.width * self.width;
        for k in 0..x.len() {
            out[k] = -v * (x[k] - self.center[k]) / w2;
        }
    }
}

/// `exp(-1 / (1 - z^2))` and its derivative in `z`.
fn bump(z: f64) -> (f64, f64) {
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - z * z;
    let v = (-1.0 / q).exp();
    (v, v * (-2.0 * z / (q * q)))
}

/// Compactly supported bump `prod_k exp(-1 / (1 - ((x_k - c_k) / r_k)^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpField {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl BumpField {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() || radius.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Domain("bump needs one positive radius per axis".into()));
        }
        Ok(Self { center, radius })
    }
}

impl ScalarField for BumpField {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).zip(&self.radius).map(|((x, c), r)| bump((x - c) / r).0).product()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let mut v = [0.0; MAX_DIM];
        let mut dv = [0.0; MAX_DIM];
        for k in 0..d {
            let (a, b) = bump((x[k] - self.center[k]) / self.radius[k]);
            v[k] = a;
            dv[k] = b / self.radius[k];
        }
        for k in 0..d {
            out[k] = (0..d).map(|j| if j == k { dv[j] } else { v[j] }).product();
        }
    }
}

/// Test functions `rho(t) eta(x)` of the weak formulation.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    /// Support `(t_lo, t_hi)` of `rho`.
    pub t_support: (f64, f64),
    pub eta: BumpField,
}

impl TestPair {
    pub fn new(t_support: (f64, f64), eta: BumpField) -> Result<Self> {
        if !(t_support.0 < t_support.1) {
            return Err(Error::Domain("rho support must be a nonempty interval".into()));
        }
        Ok(Self { t_support, eta })
    }

    /// `rho` supported on all of `(0, T)`.
    pub fn spanning(horizon: f64, eta: BumpField) -> Result<Self> {
        Self::new((0.0, horizon), eta)
    }

    fn scaled(&self, t: f64) -> (f64, f64) {
        let (a, b) = self.t_support;
        ((2.0 * t - (a + b)) / (b - a), 2.0 / (b - a))
    }

    pub fn rho(&self, t: f64) -> f64 {
        bump(self.scaled(t).0).0
    }

    pub fn rho_prime(&self, t: f64) -> f64 {
        let (z, dz) = self.scaled(t);
        bump(z).1 * dz
    }
}

/// Scalar field on `tgrid x lattice`; values indexed `[time][point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    tgrid: TimeGrid,
    lattice: Lattice,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(tgrid: TimeGrid, lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != tgrid.len() * lattice.len() {
            return Err(Error::Dimension("grid function value count does not match its grids".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid function values must be finite".into()));
        }
        Ok(Self { tgrid, lattice, values })
    }

    pub fn tgrid(&self) -> &TimeGrid {
        &self.tgrid
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spatial slice at time index `i`.
    pub fn slice(&self, i: usize) -> &[f64] {
        let m = self.lattice.len();
        &self.values[i * m..(i + 1) * m]
    }

    /// Trapezoid `L^1` norm of the slice at time index `i`.
    pub fn l1_norm(&self, i: usize) -> f64 {
        l1_weighted(&self.lattice, self.slice(i).iter().copied())
    }

    /// Trapezoid `L^1` distance between slices at time index `i`.
    pub fn l1_distance(&self, other: &GridFunction, i: usize) -> Result<f64> {
        if self.tgrid != other.tgrid {
            return Err(Error::Grid("time grids differ; compare with l1_distance_at".into()));
        }
        self.l1_between(other, i, i)
    }

    /// Trapezoid `L^1` distance at time `t`, which must be a node of both time grids.
    pub fn l1_distance_at(&self, other: &GridFunction, t: f64) -> Result<f64> {
        let find = |g: &TimeGrid| g.index_of(t).ok_or_else(|| Error::Grid(format!("t = {t} is not a grid node")));
        self.l1_between(other, find(&self.tgrid)?, find(&other.tgrid)?)
    }

    fn l1_between(&self, other: &GridFunction, i: usize, j: usize) -> Result<f64> {
        if self.lattice != other.lattice {
            return Err(Error::Grid("lattices differ".into()));
        }
        Ok(l1_weighted(&self.lattice, self.slice(i).iter().zip(other.slice(j)).map(|(a, b)| a - b)))
    }

    /// Long format `t,x1..xd,u`.
    pub fn to_table(&self) -> Table {
        let d = self.lattice.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("x{k}")));
        header.push("u".into());
        let mut t = Table::new(header);
        t.meta("n_times", self.tgrid.len()).meta("n_points", self.lattice.len()).meta("h", self.lattice.spacing);
        let mut x = vec![0.0; d];
        for (i, ti) in self.tgrid.nodes().enumerate() {
            for p in 0..self.lattice.len() {
                self.lattice.point(p, &mut x);
                let mut row = vec![ti];
                row.extend_from_slice(&x);
                row.push(self.slice(i)[p]);
                t.push_f64(&row);
            }
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }
}

fn l1_weighted(lattice: &Lattice, vals: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = vals.enumerate().map(|(p, v)| v.abs() * lattice.trapezoid_weight(p)).collect();
    pairwise_sum(&terms)
}

/// `b*(t, x) = b(t, x + B_t)`.
pub fn transformed_drift<'a>(b: &'a dyn DriftField, path: &'a FbmPath) -> Result<TransformedDrift<'a>> {
    TransformedDrift::new(b, path)
}

/// Characteristics solution on `tgrid x lattice`. Each backward solve uses
/// steps of length close to `T / n_steps`.
pub fn solve_transport(
    u0: &dyn ScalarField,
    b: &dyn DriftField,
    path: &FbmPath,
    tgrid: &TimeGrid,
    lattice: &Lattice,
    n_steps: usize,
) -> Result<GridFunction> {
    let d = lattice.dim();
    if u0.dim() != d || b.dim() != d || path.dim() != d {
        return Err(Error::Dimension("u0, drift, path and lattice dimensions differ".into()));
    }
    if n_steps == 0 {
        return Err(Error::Grid("n_steps must be >= 1".into()));
    }
    if tgrid.t0() != path.grid().t0() || tgrid.horizon() > path.grid().horizon() + 1e-12 {
        return Err(Error::Grid("time grid must start with the path and stay within it".into()));
    }
    let horizon = tgrid.horizon() - tgrid.t0();
    let m = lattice.len();
    let mut values = vec![0.0; tgrid.len() * m];
    let mut x = vec![0.0; d];
    for (i, t) in tgrid.nodes().enumerate() {
        let elapsed = t - tgrid.t0();
        let steps = ((n_steps as f64 * elapsed / horizon).round() as usize).max(1);
        for p in 0..m {
            lattice.point(p, &mut x);
            let v = if i == 0 {
                u0.value(&x)
            } else {
                let y = inverse_flow(b, &x, t, path, steps)?;
                u0.value(&y)
            };
            values[i * m + p] = v;
        }
    }
    GridFunction::new(*tgrid, lattice.clone(), values)
}

/// `int int { -u rho' eta + b* . grad u rho eta } dx dt` by the trapezoid
/// rule in time and space, with centred differences for `grad u`.
pub fn weak_residual(u: &GridFunction, b_star: &dyn DriftField, pair: &TestPair) -> Result<f64> {
    let lattice = &u.lattice;
    let d = lattice.dim();
    if b_star.dim() != d || pair.eta.dim() != d {
        return Err(Error::Dimension("drift, test function and lattice dimensions differ".into()));
    }
    let h = lattice.spacing;
    let lower = lattice.origin();
    let upper = lattice.upper();
    for k in 0..d {
        let (c, r) = (pair.eta.center[k], pair.eta.radius[k]);
        if c - r < lower[k] + h || c + r > upper[k] - h {
            return Err(Error::SupportEscape(format!(
                "eta support [{}, {}] on axis {k} leaves the lattice interior [{}, {}]",
                c - r,
                c + r,
                lower[k] + h,
                upper[k] - h
            )));
        }
    }
    let tg = &u.tgrid;
    if pair.t_support.0 < tg.t0() - 1e-12 || pair.t_support.1 > tg.horizon() + 1e-12 {
        return Err(Error::SupportEscape("rho support leaves the time grid".into()));
    }
    // nodes where eta does not vanish
    let m = lattice.len();
    let mut x = vec![0.0; d];
    let mut idx = [0usize; MAX_DIM];
    let mut active = Vec::new();
    for p in 0..m {
        lattice.point(p, &mut x);
        let e = pair.eta.value(&x);
        if e != 0.0 {
            lattice.multi_index(p, &mut idx);
            if (0..d).any(|k| idx[k] == 0 || idx[k] + 1 == lattice.extents[k]) {
                return Err(Error::SupportEscape("eta is nonzero on the lattice boundary".into()));
            }
            active.push((p, e, x.clone(), lattice.trapezoid_weight(p)));
        }
    }
    let strides: Vec<usize> = (0..d).map(|k| lattice.stride(k)).collect();
    let dt = tg.dt();
    let mut b = vec![0.0; d];
    let mut time_terms = Vec::with_capacity(tg.len());
    for (i, t) in tg.nodes().enumerate() {
        let wt = if i == 0 || i == tg.n_steps() { 0.5 * dt } else { dt };
        let (rho, rho_p) = (pair.rho(t), pair.rho_prime(t));
        if rho == 0.0 && rho_p == 0.0 {
            continue;
        }
        let slice = u.slice(i);
        let mut space_terms = Vec::with_capacity(active.len());
        for (p, e, xp, wx) in &active {
            b_star.eval(t, xp, &mut b);
            let mut adv = 0.0;
            for k in 0..d {
                let grad = (slice[p + strides[k]] - slice[p - strides[k]]) / (2.0 * h);
                adv += b[k] * grad;
            }
            space_terms.push(wx * e * (-slice[*p] * rho_p + adv * rho));
        }
        time_terms.push(wt * pairwise_sum(&space_terms));
    }
    Ok(pairwise_sum(&time_terms))
}

/// First-order upwind solution of `du/dt + b* . grad u = 0` with the drift
/// frozen at the left end of each step and zero-gradient boundary values.
///
/// Requires `dt * sqrt(d) * |b*|_inf / h <= 0.9`.
pub fn upwind_reference(
    u0: &dyn ScalarField,
    b_star: &dyn DriftField,
    tgrid: &TimeGrid,
    lattice: &Lattice,
) -> Result<GridFunction> {
    let d = lattice.dim();
    if u0.dim() != d || b_star.dim() != d {
        return Err(Error::Dimension("u0, drift and lattice dimensions differ".into()));
    }
    let h = lattice.spacing;
    let dt = tgrid.dt();
    let cfl = dt * (d as f64).sqrt() * b_star.sup_norm() / h;
    if !(cfl <= 0.9) {
        return Err(Error::Cfl(format!("dt * sqrt(d) * |b|_inf / h = {cfl} exceeds 0.9")));
    }
    let m = lattice.len();
    let pts = lattice.points();
    let strides: Vec<usize> = (0..d).map(|k| lattice.stride(k)).collect();
    let mut values = Vec::with_capacity(tgrid.len() * m);
    let mut cur: Vec<f64> = pts.iter().map(|x| u0.value(x)).collect();
    values.extend_from_slice(&cur);
    let mut next = vec![0.0; m];
    let mut b = vec![0.0; d];
    let mut idx = [0usize; MAX_DIM];
    for i in 0..tgrid.n_steps() {
        let t = tgrid.node(i);
        for p in 0..m {
            b_star.eval(t, &pts[p], &mut b);
            lattice.multi_index(p, &mut idx);
            let mut change = 0.0;
            for k in 0..d {
                let s = strides[k];
                let up = if idx[k] + 1 < lattice.extents[k] { cur[p + s] } else { cur[p] };
                let down = if idx[k] > 0 { cur[p - s] } else { cur[p] };
                let grad = if b[k] > 0.0 { (cur[p] - down) / h } else { (up - cur[p]) / h };
                change += b[k] * grad;
            }
            next[p] = cur[p] - dt * change;
        }
        std::mem::swap(&mut cur, &mut next);
        values.extend_from_slice(&cur);
    }
    GridFunction::new(*tgrid, lattice.clone(), values)
}

/// Residual study record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualLevel {
    pub level: usize,
    pub h: f64,
    pub dt: f64,
    pub residual: f64,
}

/// CSV `level,h,dt,residual`.
pub fn residual_table(levels: &[ResidualLevel]) -> Table {
    let mut t = Table::new(["level", "h", "dt", "residual"]);
    for l in levels {
        t.push(vec![l.level.to_string(), l.h.to_string(), l.dt.to_string(), l.residual.to_string()]);
    }
    t
}
