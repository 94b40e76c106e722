//! Continuity equation `d mu/dt + div(b* mu) = 0` for positive measures,
//! solved exactly on atoms by pushing them through the flow, plus a
//! conservative finite-volume oracle for densities.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fbm::FbmPath;
use crate::flow::{DriftField, TransformedDrift, MAX_DIM};
use crate::grid::TimeGrid;
use crate::stats::pairwise_sum;
use crate::table::Table;
use crate::transport::Lattice;

/// Weighted atoms `sum_i w_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    /// Row-major `n x dim`.
    positions: Vec<f64>,
    weights: Vec<f64>,
    total_mass: f64,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Dimension(format!("dimension {dim} outside 1..={MAX_DIM}")));
        }
        if positions.len() != weights.len() * dim {
            return Err(Error::Dimension("one position per weight required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total_mass = pairwise_sum(&weights);
        Ok(Self { dim, positions, weights, total_mass })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Stratified midpoint sampling: every lattice cell (centred on a lattice
    /// point, side `h`) is split into `k^d` sub-cells, each carrying one atom
    /// at its midpoint with weight `density * (h / k)^d`.
    pub fn from_density(density: &GridDensity, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("at least one particle per cell".into()));
        }
        let lat = &density.lattice;
        let d = lat.dim();
        let h = lat.spacing();
        let sub = h / k as f64;
        let per_cell = k.pow(d as u32);
        let vol = sub.powi(d as i32);
        let mut positions = Vec::with_capacity(lat.len() * per_cell * d);
        let mut weights = Vec::with_capacity(lat.len() * per_cell);
        let mut c = vec![0.0; d];
        for (p, rho) in density.values.iter().enumerate() {
            if *rho == 0.0 {
                continue;
            }
            lat.point(p, &mut c);
            for s in 0..per_cell {
                let mut r = s;
                for ck in &c {
                    let j = r % k;
                    r /= k;
                    positions.push(ck - 0.5 * h + (j as f64 + 0.5) * sub);
                }
                weights.push(rho * vol);
            }
        }
        Self::new(d, positions, weights)
    }

    /// CSV `w,x1..xd`.
    pub fn to_table(&self) -> Table {
        let mut header = vec!["w".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        let mut t = Table::new(header);
        t.meta("n_particles", self.len()).meta("total_mass", self.total_mass);
        for i in 0..self.len() {
            let mut row = vec![self.weights[i]];
            row.extend_from_slice(self.position(i));
            t.push_f64(&row);
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }
}

/// Which representation of the moving particles is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Flow of the transformed field `b*`: `Xhat_t = X_t - (B_t - B_0)`.
    #[default]
    Transformed,
    /// Flow of the perturbed equation, `X_t = Xhat_t + B_t - B_0`.
    Perturbed,
}

/// `mu_t = Xhat(t, .)_# mu` in the transformed frame.
pub fn push_forward(ens: &ParticleEnsemble, b: &dyn DriftField, path: &FbmPath, t: f64, n_steps: usize) -> Result<ParticleEnsemble> {
    push_forward_in(Frame::Transformed, ens, b, path, t, n_steps)
}

/// Push-forward with explicit Euler on `[t0, t]` of the path grid; weights
/// and total mass are carried over untouched.
pub fn push_forward_in(
    frame: Frame,
    ens: &ParticleEnsemble,
    b: &dyn DriftField,
    path: &FbmPath,
    t: f64,
    n_steps: usize,
) -> Result<ParticleEnsemble> {
    let d = ens.dim;
    if n_steps == 0 {
        return Err(Error::Grid("n_steps must be >= 1".into()));
    }
    let t0 = path.grid().t0();
    let star = TransformedDrift::new(b, path)?;
    if d != b.dim() {
        return Err(Error::Dimension("ensemble and drift dimensions differ".into()));
    }
    let grid = TimeGrid::new(t0, t, n_steps)?;
    let dt = grid.dt();
    let mut shift = [0.0; MAX_DIM];
    if frame == Frame::Perturbed {
        let mut b0 = [0.0; MAX_DIM];
        path.value_at(t, &mut shift[..d]);
        path.value_at(t0, &mut b0[..d]);
        for k in 0..d {
            shift[k] -= b0[k];
        }
    }
    let mut positions = ens.positions.clone();
    let mut v = [0.0; MAX_DIM];
    for z in positions.chunks_mut(d) {
        for i in 0..n_steps {
            star.eval(grid.node(i), z, &mut v[..d]);
            for k in 0..d {
                z[k] += dt * v[k];
            }
        }
        if frame == Frame::Perturbed {
            for k in 0..d {
                z[k] += shift[k];
            }
        }
    }
    Ok(ParticleEnsemble { dim: d, positions, weights: ens.weights.clone(), total_mass: ens.total_mass })
}

/// `int phi d mu = sum_i w_i phi(x_i)` with fixed-order pairwise summation.
pub fn test_integral(ens: &ParticleEnsemble, phi: impl Fn(&[f64]) -> f64) -> f64 {
    let terms: Vec<f64> = (0..ens.len()).map(|i| ens.weights[i] * phi(ens.position(i))).collect();
    pairwise_sum(&terms)
}

/// Cell-averaged density on a lattice of cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lattice: Lattice,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(Error::Dimension("one density value per lattice cell".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("density must be nonnegative".into()));
        }
        Ok(Self { lattice, values })
    }

    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = lattice.points().iter().map(|x| f(x)).collect();
        Self::new(lattice, values)
    }

    pub fn mass(&self) -> f64 {
        let vol = self.lattice.spacing().powi(self.lattice.dim() as i32);
        pairwise_sum(&self.values) * vol
    }

    /// Midpoint quadrature of `int phi rho dx`.
    pub fn integrate(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        let vol = self.lattice.spacing().powi(self.lattice.dim() as i32);
        let pts = self.lattice.points();
        let terms: Vec<f64> = pts.iter().zip(&self.values).map(|(x, r)| phi(x) * r * vol).collect();
        pairwise_sum(&terms)
    }
}

/// Finite-volume solution with outflow bookkeeping.
#[derive(Debug, Clone)]
pub struct FvSolution {
    pub tgrid: TimeGrid,
    /// Density after each step, index 0 is the initial density.
    pub densities: Vec<GridDensity>,
    /// Cumulative mass that left through the boundary after each step.
    pub outflow: Vec<f64>,
}

impl FvSolution {
    pub fn last(&self) -> &GridDensity {
        self.densities.last().expect("at least the initial density")
    }
}

/// Conservative first-order upwind scheme for `d rho/dt + div(b* rho) = 0`.
///
/// Face velocities are sampled at face midpoints at the left end of each time
/// step; nothing enters through the boundary. Requires
/// `dt * sqrt(d) * |b*|_inf / h <= 0.9`.
pub fn fv_reference(density0: &GridDensity, b_star: &dyn DriftField, tgrid: &TimeGrid) -> Result<FvSolution> {
    let lat = &density0.lattice;
    let d = lat.dim();
    if b_star.dim() != d {
        return Err(Error::Dimension("drift and lattice dimensions differ".into()));
    }
    let h = lat.spacing();
    let dt = tgrid.dt();
    let cfl = dt * (d as f64).sqrt() * b_star.sup_norm() / h;
    if !(cfl <= 0.9) {
        return Err(Error::Cfl(format!("dt * sqrt(d) * |b|_inf / h = {cfl} exceeds 0.9")));
    }
    let m = lat.len();
    let pts = lat.points();
    let strides: Vec<usize> = (0..d).map(|k| lat.stride(k)).collect();
    let vol = h.powi(d as i32);
    let mut cur = density0.values.clone();
    let mut densities = vec![density0.clone()];
    let mut outflow = vec![0.0];
    let mut lost = 0.0;
    let mut v = vec![0.0; d];
    let mut face = vec![0.0; d];
    let mut idx = [0usize; MAX_DIM];
    let mut next = vec![0.0; m];
    for i in 0..tgrid.n_steps() {
        let t = tgrid.node(i);
        next.copy_from_slice(&cur);
        let mut step_out = Vec::new();
        for p in 0..m {
            lat.multi_index(p, &mut idx);
            for k in 0..d {
                // flux through the upper face of cell p along axis k
                face.copy_from_slice(&pts[p]);
                face[k] += 0.5 * h;
                b_star.eval(t, &face, &mut v);
                let vk = v[k];
                let has_upper = idx[k] + 1 < lat.extents()[k];
                let upper = if has_upper { cur[p + strides[k]] } else { 0.0 };
                let flux = if vk > 0.0 { vk * cur[p] } else { vk * upper };
                let amount = dt / h * flux;
                next[p] -= amount;
                if has_upper {
                    next[p + strides[k]] += amount;
                } else if amount > 0.0 {
                    step_out.push(amount * vol);
                }
                if idx[k] == 0 {
                    // lower boundary face: only outflow
                    let mut lf = pts[p].clone();
                    lf[k] -= 0.5 * h;
                    b_star.eval(t, &lf, &mut v);
                    if v[k] < 0.0 {
                        let amount = -dt / h * v[k] * cur[p];
                        next[p] -= amount;
                        step_out.push(amount * vol);
                    }
                }
            }
        }
        for x in next.iter_mut() {
            // rounding can leave tiny negative values next to empty cells
            if *x < 0.0 && *x > -1e-15 {
                *x = 0.0;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        lost += pairwise_sum(&step_out);
        outflow.push(lost);
        densities.push(GridDensity { lattice: lat.clone(), values: cur.clone() });
    }
    Ok(FvSolution { tgrid: *tgrid, densities, outflow })
}

/// One line of a push-forward vs oracle comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub phi_id: String,
    pub pushforward: f64,
    pub reference: f64,
}

impl Comparison {
    pub fn rel_err(&self) -> f64 {
        (self.pushforward - self.reference).abs() / self.reference.abs().max(f64::MIN_POSITIVE)
    }
}

/// CSV `phi_id,pushforward,reference,rel_err`.
pub fn comparison_table(rows: &[Comparison]) -> Table {
    let mut t = Table::new(["phi_id", "pushforward", "reference", "rel_err"]);
    for r in rows {
        t.push(vec![r.phi_id.clone(), r.pushforward.to_string(), r.reference.to_string(), r.rel_err().to_string()]);
    }
    t
}
