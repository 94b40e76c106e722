use nalgebra::{Cholesky, DMatrix, Dyn};
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, check_generator_grid, check_rough_hurst, rh_unchecked, FbmGenerator, FbmPath, Hurst, Method};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::rng_from_seed;

const MAX_STEPS: usize = 8192;
const JITTER: f64 = 1e-12;

/// Exact sampler from the Cholesky factor of `[R_H(t_i, t_j)]_{i,j >= 1}`.
#[derive(Debug, Clone)]
pub struct CholeskyGenerator {
    hurst: f64,
    grid: TimeGrid,
    /// Lower factor packed row by row.
    lower: Vec<f64>,
    jittered: bool,
}

impl CholeskyGenerator {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        check_rough_hurst(hurst)?;
        check_generator_grid(&grid)?;
        let n = grid.n_steps();
        if n > MAX_STEPS {
            return Err(Error::SizeGuard(format!("Cholesky generator limited to {MAX_STEPS} steps, got {n}")));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| rh_unchecked(grid.node(i + 1), grid.node(j + 1), hurst));
        let (chol, jittered) = match Cholesky::<f64, Dyn>::new(cov.clone()) {
            Some(c) => (c, false),
            None => {
                let mut cov = cov;
                for i in 0..n {
                    cov[(i, i)] += JITTER;
                }
                (Cholesky::new(cov).ok_or(Error::NotPositiveDefinite(n))?, true)
            }
        };
        let l = chol.unpack();
        let lower = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(Self { hurst, grid, lower, jittered })
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }
}

impl FbmGenerator for CholeskyGenerator {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> f64 {
        self.hurst
    }

    fn sample(&self, dim: usize, seed: u64) -> FbmPath {
        let n = self.grid.n_steps();
        let mut rng = rng_from_seed(seed);
        let mut values = vec![0.0; (n + 1) * dim];
        let mut z = vec![0.0; n];
        for k in 0..dim {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let mut start = 0;
            for i in 0..n {
                let row = &self.lower[start..start + i + 1];
                start += i + 1;
                let acc: f64 = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                values[(i + 1) * dim + k] = acc;
            }
        }
        let mut path =
            FbmPath::from_raw(self.grid, dim, values, Hurst::Single(self.hurst), Method::CovarianceCholesky, seed, None);
        if self.jittered {
            path.push_note("jitter", JITTER.to_string());
        }
        path
    }
}

/// One-shot Cholesky sample of `d` independent fBm coordinates.
pub fn cholesky_fbm(hurst: f64, dim: usize, grid: TimeGrid, seed: u64) -> Result<FbmPath> {
    check_dim(dim)?;
    Ok(CholeskyGenerator::new(hurst, grid)?.sample(dim, seed))
}
