//! Fractional Brownian motion paths on uniform grids.
//!
//! Three interchangeable generators produce exact (Cholesky, circulant
//! embedding) or consistent (Volterra) samples of `B^H` with `0 < H < 1/2`.
//! Each generator is a reusable object holding its factorisation, so Monte
//! Carlo drivers pay the set-up cost once; the free functions
//! [`cholesky_fbm`], [`circulant_fbm`] and [`volterra_fbm`] are one-shot
//! conveniences.

mod cholesky;
mod circulant;
mod io;
mod kernel;
mod superposed;
mod volterra;

pub use cholesky::{cholesky_fbm, CholeskyGenerator};
pub use circulant::{circulant_fbm, CirculantGenerator};
pub use kernel::{c_h, covariance_rh, kernel_kh, Kernel};
pub use superposed::{default_lambda, expected_sup_estimate, superposed_path, SuperpositionSpec};
pub use volterra::{volterra_covariance_bias, volterra_fbm, VolterraGenerator};

pub(crate) use kernel::{check_rough_hurst, rh_unchecked};

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// How a path was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    CovarianceCholesky,
    Circulant,
    Volterra,
    Superposed,
    /// Identically zero path (noise-free control runs).
    Zero,
    /// Values supplied by the caller or read from a file.
    Given,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CovarianceCholesky => "covariance-cholesky",
            Method::Circulant => "circulant",
            Method::Volterra => "volterra",
            Method::Superposed => "superposed",
            Method::Zero => "zero",
            Method::Given => "given",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "covariance-cholesky" | "cholesky" => Method::CovarianceCholesky,
            "circulant" => Method::Circulant,
            "volterra" => Method::Volterra,
            "superposed" => Method::Superposed,
            "zero" => Method::Zero,
            "given" => Method::Given,
            other => return Err(Error::Parse(format!("unknown fBm method `{other}`"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Roughness specification of a path.
#[derive(Debug, Clone, PartialEq)]
pub enum Hurst {
    Single(f64),
    Superposed(SuperpositionSpec),
    /// No roughness information (zero or externally supplied paths).
    None,
}

/// A sampled Gaussian perturbation path `B_t` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    grid: TimeGrid,
    dim: usize,
    /// Row-major `(n_steps + 1) x dim`.
    values: Vec<f64>,
    hurst: Hurst,
    method: Method,
    seed: u64,
    /// Row-major `n_steps x dim`; present for Volterra paths only.
    wiener_increments: Option<Vec<f64>>,
    notes: Vec<(String, String)>,
}

impl FbmPath {
    pub(crate) fn from_raw(
        grid: TimeGrid,
        dim: usize,
        values: Vec<f64>,
        hurst: Hurst,
        method: Method,
        seed: u64,
        wiener_increments: Option<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len() * dim);
        Self { grid, dim, values, hurst, method, seed, wiener_increments, notes: Vec::new() }
    }

    /// The identically zero path.
    pub fn zero(grid: TimeGrid, dim: usize) -> Self {
        Self::from_raw(grid, dim, vec![0.0; grid.len() * dim], Hurst::None, Method::Zero, 0, None)
    }

    /// Path with caller-supplied node values (row-major, `dim` per node).
    pub fn given(grid: TimeGrid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("dim must be >= 1".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::Dimension(format!(
                "expected {} values for {} nodes of dimension {dim}, got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("path values must be finite".into()));
        }
        Ok(Self::from_raw(grid, dim, values, Hurst::None, Method::Given, 0, None))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value vector at node `i`.
    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn hurst(&self) -> &Hurst {
        &self.hurst
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn wiener_increments(&self) -> Option<&[f64]> {
        self.wiener_increments.as_deref()
    }

    pub fn notes(&self) -> &[(String, String)] {
        &self.notes
    }

    pub(crate) fn push_note(&mut self, key: &str, value: String) {
        self.notes.push((key.to_string(), value));
    }

    /// Short provenance tag, e.g. `circulant:H=0.25:seed=7`.
    pub fn id(&self) -> String {
        match &self.hurst {
            Hurst::Single(h) => format!("{}:H={}:seed={}", self.method, h, self.seed),
            Hurst::Superposed(spec) => {
                format!("{}:N={}:seed={}", self.method, spec.hurst_seq().len(), self.seed)
            }
            Hurst::None => format!("{}:seed={}", self.method, self.seed),
        }
    }

    /// Path value at time `t`, linearly interpolated between nodes and held
    /// constant outside the grid.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let n = self.grid.n_steps();
        let u = ((t - self.grid.t0()) / self.grid.dt()).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        let frac = u - i as f64;
        if frac <= 1e-9 {
            out.copy_from_slice(self.value(i));
        } else if frac >= 1.0 - 1e-9 {
            out.copy_from_slice(self.value(i + 1));
        } else {
            let (a, b) = (self.value(i), self.value(i + 1));
            for k in 0..self.dim {
                out[k] = a[k] + frac * (b[k] - a[k]);
            }
        }
    }

    /// Path values at every node of `grid` (row-major).
    pub fn sample_on(&self, grid: &TimeGrid) -> Vec<f64> {
        if grid == &self.grid {
            return self.values.clone();
        }
        let mut out = vec![0.0; grid.len() * self.dim];
        for (i, t) in grid.nodes().enumerate() {
            self.value_at(t, &mut out[i * self.dim..(i + 1) * self.dim]);
        }
        out
    }

    /// Restriction to every `stride`-th node; Wiener increments are summed.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        let n = self.grid.n_steps();
        if stride == 0 || n % stride != 0 {
            return Err(Error::Grid(format!("stride {stride} does not divide {n}")));
        }
        let grid = TimeGrid::new(self.grid.t0(), self.grid.horizon(), n / stride)?;
        let d = self.dim;
        let values = (0..grid.len()).flat_map(|i| self.value(i * stride).to_vec()).collect();
        let wiener_increments = self.wiener_increments.as_ref().map(|w| {
            let mut out = vec![0.0; grid.n_steps() * d];
            for j in 0..n {
                for k in 0..d {
                    out[(j / stride) * d + k] += w[j * d + k];
                }
            }
            out
        });
        let mut path = self.clone();
        path.grid = grid;
        path.values = values;
        path.wiener_increments = wiener_increments;
        Ok(path)
    }
}

/// Any of the exact/consistent single-`H` generators.
pub trait FbmGenerator: Send + Sync {
    fn grid(&self) -> &TimeGrid;
    fn hurst(&self) -> f64;
    fn sample(&self, dim: usize, seed: u64) -> FbmPath;
}

/// Reusable generator selected at run time.
pub fn generator(method: Method, hurst: f64, grid: TimeGrid) -> Result<Box<dyn FbmGenerator>> {
    Ok(match method {
        Method::CovarianceCholesky => Box::new(CholeskyGenerator::new(hurst, grid)?),
        Method::Circulant => Box::new(CirculantGenerator::new(hurst, grid)?),
        Method::Volterra => Box::new(VolterraGenerator::new(hurst, grid)?),
        other => {
            return Err(Error::Domain(format!("`{other}` is not a single-H generator")));
        }
    })
}

pub(crate) fn check_generator_grid(grid: &TimeGrid) -> Result<()> {
    if grid.t0() != 0.0 {
        return Err(Error::Grid(format!("generators need t0 = 0, got {}", grid.t0())));
    }
    Ok(())
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Dimension("dim must be >= 1".into()));
    }
    Ok(())
}
