use super::{check_dim, CirculantGenerator, FbmGenerator, FbmPath, Hurst, Method};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::stream_seed;
use crate::stats;

const SUP_PATHS: usize = 500;
const SUP_STEPS: usize = 256;

/// Finite superposition `sum_n lambda_n B^{H_n, n}` of independent fBms.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionSpec {
    hurst_seq: Vec<f64>,
    weights: Vec<f64>,
    tail_weight: f64,
}

impl SuperpositionSpec {
    /// Validates a strictly decreasing `H` sequence in `(0, 1/2)` and weights
    /// with finite, positive absolute sum.
    pub fn new(hurst_seq: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_hurst_seq(&hurst_seq)?;
        if weights.len() != hurst_seq.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} Hurst indices",
                weights.len(),
                hurst_seq.len()
            )));
        }
        let total: f64 = weights.iter().map(|w| w.abs()).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Domain(format!("sum of |lambda_n| = {total} must be finite and positive")));
        }
        Ok(Self { hurst_seq, weights, tail_weight: 0.0 })
    }

    /// Records the weight `sum_{n>N} 2^{-n}` dropped by truncation.
    pub fn with_tail_weight(mut self, tail: f64) -> Self {
        self.tail_weight = tail;
        self
    }

    pub fn hurst_seq(&self) -> &[f64] {
        &self.hurst_seq
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn truncation(&self) -> usize {
        self.hurst_seq.len()
    }

    pub fn tail_weight(&self) -> f64 {
        self.tail_weight
    }

    /// `Var(BB_t) = sum lambda_n^2 t^{2 H_n}` for one coordinate.
    pub fn variance(&self, t: f64) -> f64 {
        self.hurst_seq.iter().zip(&self.weights).map(|(h, l)| l * l * t.powf(2.0 * h)).sum()
    }
}

fn check_hurst_seq(seq: &[f64]) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Domain("Hurst sequence is empty".into()));
    }
    for &h in seq {
        if !(h > 0.0 && h < 0.5) {
            return Err(Error::Domain(format!("H = {h} must lie in (0, 1/2)")));
        }
    }
    if seq.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("Hurst sequence must be strictly decreasing".into()));
    }
    Ok(())
}

/// Monte Carlo estimate (mean, standard error) of `E[sup_{[0,1]} |B^H_s|]`.
pub fn expected_sup_estimate(hurst: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<(f64, f64)> {
    let gen = CirculantGenerator::new(hurst, TimeGrid::unit(1.0, n_steps)?)?;
    let sups: Vec<f64> = (0..n_paths as u64)
        .map(|r| {
            let p = gen.sample(1, stream_seed(seed, r));
            p.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        })
        .collect();
    Ok((stats::mean(&sups), stats::std_err(&sups)))
}

/// Weights `lambda_n = 2^{-n} / max(1, m_n)` for the first `truncation`
/// entries of `hurst_seq`, where `m_n` estimates `E[sup |B^{H_n}|]`.
pub fn default_lambda(hurst_seq: &[f64], truncation: usize, seed: u64) -> Result<SuperpositionSpec> {
    if truncation == 0 || truncation > hurst_seq.len() {
        return Err(Error::Domain(format!(
            "truncation {truncation} must lie in 1..={}",
            hurst_seq.len()
        )));
    }
    let seq = hurst_seq[..truncation].to_vec();
    check_hurst_seq(&seq)?;
    let mut weights = Vec::with_capacity(truncation);
    for (n, &h) in seq.iter().enumerate() {
        let (m, _) = expected_sup_estimate(h, SUP_PATHS, SUP_STEPS, stream_seed(seed, n as u64))?;
        weights.push(0.5_f64.powi(n as i32 + 1) / m.max(1.0));
    }
    Ok(SuperpositionSpec::new(seq, weights)?.with_tail_weight(0.5_f64.powi(truncation as i32)))
}

/// Seed of component `n`; component 0 reuses the base seed.
fn component_seed(seed: u64, n: usize) -> u64 {
    if n == 0 {
        seed
    } else {
        stream_seed(seed, n as u64)
    }
}

/// Sample of the superposed process, components by circulant embedding.
pub fn superposed_path(spec: &SuperpositionSpec, dim: usize, grid: TimeGrid, seed: u64) -> Result<FbmPath> {
    check_dim(dim)?;
    let mut values: Vec<f64> = Vec::new();
    for (n, (&h, &lambda)) in spec.hurst_seq.iter().zip(&spec.weights).enumerate() {
        let comp = CirculantGenerator::new(h, grid)?.sample(dim, component_seed(seed, n));
        if n == 0 {
            values = comp.values().iter().map(|v| lambda * v).collect();
        } else {
            for (acc, v) in values.iter_mut().zip(comp.values()) {
                *acc += lambda * v;
            }
        }
    }
    let mut path = FbmPath::from_raw(grid, dim, values, Hurst::Superposed(spec.clone()), Method::Superposed, seed, None);
    path.push_note("tail_weight", spec.tail_weight.to_string());
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::circulant_fbm;

    #[test]
    fn single_component_equals_plain_circulant() {
        let g = TimeGrid::unit(1.0, 64).unwrap();
        let spec = SuperpositionSpec::new(vec![0.3], vec![1.0]).unwrap();
        let a = superposed_path(&spec, 2, g, 11).unwrap();
        let b = circulant_fbm(0.3, 2, g, 11).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn spec_validation() {
        assert!(SuperpositionSpec::new(vec![0.2, 0.3], vec![1.0, 1.0]).is_err());
        assert!(SuperpositionSpec::new(vec![0.3, 0.2], vec![0.0, 0.0]).is_err());
        assert!(SuperpositionSpec::new(vec![0.3, 0.6], vec![1.0, 1.0]).is_err());
        assert!(SuperpositionSpec::new(vec![0.3, 0.2], vec![1.0]).is_err());
    }
}
