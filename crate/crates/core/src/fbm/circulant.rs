use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_dim, check_generator_grid, check_rough_hurst, FbmGenerator, FbmPath, Hurst, Method};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::rng_from_seed;

const CLIP_LIMIT: f64 = 1e-8;

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(k: usize, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

/// Davies–Harte sampler: fractional Gaussian noise from a circulant
/// embedding of size `2n`, cumulated into fBm.
///
/// One complex FFT yields two independent noise vectors (real and imaginary
/// parts); they feed consecutive coordinates.
#[derive(Clone)]
pub struct CirculantGenerator {
    hurst: f64,
    grid: TimeGrid,
    /// `sqrt(lambda_k / 2n)`
    scale: Vec<f64>,
    max_clip: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantGenerator")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("max_clip", &self.max_clip)
            .finish()
    }
}

impl CirculantGenerator {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        check_rough_hurst(hurst)?;
        check_generator_grid(&grid)?;
        let n = grid.n_steps();
        let m = 2 * n;
        let mut c: Vec<Complex64> = (0..m)
            .map(|k| {
                let lag = if k <= n { k } else { m - k };
                Complex64::new(fgn_autocov(lag, hurst), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut c);
        let mut max_clip: f64 = 0.0;
        let mut scale = Vec::with_capacity(m);
        for z in &c {
            let lambda = z.re;
            if lambda < 0.0 {
                max_clip = max_clip.max(-lambda);
            }
            scale.push((lambda.max(0.0) / m as f64).sqrt());
        }
        if max_clip > CLIP_LIMIT {
            return Err(Error::NegativeEigenvalue(-max_clip));
        }
        Ok(Self { hurst, grid, scale, max_clip, fft })
    }

    /// Largest magnitude of a negative embedding eigenvalue that was clipped.
    pub fn max_clip(&self) -> f64 {
        self.max_clip
    }
}

impl FbmGenerator for CirculantGenerator {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn hurst(&self) -> f64 {
        self.hurst
    }

    fn sample(&self, dim: usize, seed: u64) -> FbmPath {
        let n = self.grid.n_steps();
        let m = 2 * n;
        let step_scale = self.grid.dt().powf(self.hurst);
        let mut rng = rng_from_seed(seed);
        let mut values = vec![0.0; (n + 1) * dim];
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        let mut k = 0;
        while k < dim {
            for (z, s) in buf.iter_mut().zip(&self.scale) {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *z = Complex64::new(s * re, s * im);
            }
            self.fft.process(&mut buf);
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for i in 0..n {
                acc_re += buf[i].re * step_scale;
                acc_im += buf[i].im * step_scale;
                values[(i + 1) * dim + k] = acc_re;
                if k + 1 < dim {
                    values[(i + 1) * dim + k + 1] = acc_im;
                }
            }
            k += 2;
        }
        let mut path = FbmPath::from_raw(self.grid, dim, values, Hurst::Single(self.hurst), Method::Circulant, seed, None);
        if self.max_clip > 0.0 {
            path.push_note("max_clip", self.max_clip.to_string());
        }
        path
    }
}

/// One-shot circulant-embedding sample.
pub fn circulant_fbm(hurst: f64, dim: usize, grid: TimeGrid, seed: u64) -> Result<FbmPath> {
    check_dim(dim)?;
    Ok(CirculantGenerator::new(hurst, grid)?.sample(dim, seed))
}
