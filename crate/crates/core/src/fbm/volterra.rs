use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, check_generator_grid, rh_unchecked, FbmGenerator, FbmPath, Hurst, Kernel, Method};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::rng::rng_from_seed;

/// Unit-grid cell integrals `int_j^{j+1} K_H(i, v) dv`, `j < i`.
fn unit_row(kernel: &Kernel, i: usize) -> Vec<f64> {
    let t = i as f64;
    (0..i).map(|j| kernel.cell_integral_in_s(t, j as f64, (j + 1) as f64)).collect()
}

/// Sampler of `B_{t_i} = sum_{j<i} Kbar(t_i, s_j) dW_j` with cell-averaged
/// kernel weights and the Wiener increments kept alongside the path.
///
/// By self-similarity of the kernel the weights on a grid of step `dt` are
/// `dt^{H-1/2}` times the unit-grid cell integrals.
#[derive(Debug, Clone)]
pub struct VolterraGenerator {
    hurst: f64,
    grid: TimeGrid,
    /// Row `i` (1-based) occupies `offset(i)..offset(i)+i`.
    weights: Vec<f64>,
}

fn offset(i: usize) -> usize {
    i * (i - 1) / 2
}

impl VolterraGenerator {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        let kernel = Kernel::new(hurst)?;
        check_generator_grid(&grid)?;
        let n = grid.n_steps();
        let scale = grid.dt().powf(hurst - 0.5);
        let mut weights = Vec::with_capacity(offset(n + 1));
        for i in 1..=n {
            weights.extend(unit_row(&kernel, i).into_iter().map(|w| w * scale));
        }
        Ok(Self { hurst, grid, weights })
    }

    /// Weight `Kbar(t_i, s_j)` multiplying `dW_j`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            0.0
        } else {
            self.weights[offset(i) + j]
        }
    }

    /// Covariance of the discrete process, `sum_j Kbar_ij Kbar_kj dt`.
    pub fn discrete_covariance(&self, i: usize, k: usize) -> f64 {
        let m = i.min(k);
        let dt = self.grid.dt();
        (0..m).map(|j| self.weight(i, j) * self.weight(k, j)).sum::<f64>() * dt
    }
}

impl FbmGenerator for VolterraGenerator {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> f64 {
        self.hurst
    }

    fn sample(&self, dim: usize, seed: u64) -> FbmPath {
        let n = self.grid.n_steps();
        let sd = self.grid.dt().sqrt();
        let mut rng = rng_from_seed(seed);
        let mut dw = vec![0.0; n * dim];
        for x in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x = sd * z;
        }
        let mut values = vec![0.0; (n + 1) * dim];
        let mut col = vec![0.0; n];
        for k in 0..dim {
            for (j, c) in col.iter_mut().enumerate() {
                *c = dw[j * dim + k];
            }
            for i in 1..=n {
                let row = &self.weights[offset(i)..offset(i) + i];
                values[i * dim + k] = row.iter().zip(&col).map(|(a, b)| a * b).sum();
            }
        }
        FbmPath::from_raw(self.grid, dim, values, Hurst::Single(self.hurst), Method::Volterra, seed, Some(dw))
    }
}

/// One-shot Volterra sample.
pub fn volterra_fbm(hurst: f64, dim: usize, grid: TimeGrid, seed: u64) -> Result<FbmPath> {
    check_dim(dim)?;
    Ok(VolterraGenerator::new(hurst, grid)?.sample(dim, seed))
}

/// `|Cov(B_{t_i}, B_{t_k}) - R_H(t_i, t_k)|` for the Volterra discretisation,
/// computed from the two kernel rows only.
pub fn volterra_covariance_bias(hurst: f64, grid: TimeGrid, i: usize, k: usize) -> Result<f64> {
    let kernel = Kernel::new(hurst)?;
    check_generator_grid(&grid)?;
    let dt = grid.dt();
    let scale = dt.powf(hurst - 0.5);
    let ri = unit_row(&kernel, i);
    let rk = unit_row(&kernel, k);
    let cov: f64 = ri.iter().zip(&rk).map(|(a, b)| a * b).sum::<f64>() * scale * scale * dt;
    Ok((cov - rh_unchecked(grid.node(i), grid.node(k), hurst)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increments_have_grid_length() {
        let g = TimeGrid::unit(1.0, 32).unwrap();
        let p = volterra_fbm(0.25, 2, g, 3).unwrap();
        assert_eq!(p.wiener_increments().unwrap().len(), 32 * 2);
        assert_eq!(p.value(0), &[0.0, 0.0]);
    }

    #[test]
    fn discrete_variance_close_to_exact() {
        let g = TimeGrid::unit(1.0, 128).unwrap();
        let gen = VolterraGenerator::new(0.25, g).unwrap();
        let v = gen.discrete_covariance(128, 128);
        assert!((v - 1.0).abs() < 0.02, "{v}");
        let b = volterra_covariance_bias(0.25, g, 128, 128).unwrap();
        assert!((b - (v - 1.0).abs()).abs() < 1e-12);
    }
}
