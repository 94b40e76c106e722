//! Independent reference values shared by the integration tests.

#![allow(dead_code)]

use statrs::function::beta::{beta, beta_reg};
use statrs::function::gamma::gamma;

pub const SEED: u64 = 20261016;

/// `R_H(t, s)` written out directly.
pub fn fbm_cov(t: f64, s: f64, h: f64) -> f64 {
    0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// `K_H(t, s)` through the regularised incomplete beta function: the inner
/// integral `int_s^t u^{H-3/2} (u-s)^{H-1/2} du` becomes, with `w = s/u`,
/// `s^{2H-1} B(1-2H, H+1/2) (1 - I_{s/t}(1-2H, H+1/2))`.
pub fn kernel(t: f64, s: f64, h: f64) -> f64 {
    if s >= t {
        return 0.0;
    }
    let (a, b) = (1.0 - 2.0 * h, h + 0.5);
    let ch = (2.0 * h / (a * beta(a, b))).sqrt();
    let inner = s.powf(2.0 * h - 1.0) * beta(a, b) * (1.0 - beta_reg(a, b, s / t));
    ch * ((t / s).powf(h - 0.5) * (t - s).powf(h - 0.5) - (h - 0.5) * s.powf(0.5 - h) * inner)
}

/// Riemann–Liouville integral of `x^k` from 0: `Gamma(k+1)/Gamma(k+1+a) x^{k+a}`.
pub fn rl_power_integral(k: f64, a: f64, x: f64) -> f64 {
    gamma(k + 1.0) / gamma(k + 1.0 + a) * x.powf(k + a)
}

/// Gauss–Legendre composite rule with panels halving towards both ends.
pub fn graded(a: f64, b: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    let r = roughflow::quadrature::Rule::new(12);
    let mid = 0.5 * (a + b);
    let len = mid - a;
    let mut acc = 0.0;
    let mut hi = 1.0;
    for _ in 0..48 {
        let lo = 0.5 * hi;
        acc += r.integrate(a + len * lo, a + len * hi, &mut *f);
        acc += r.integrate(b - len * hi, b - len * lo, &mut *f);
        hi = lo;
    }
    acc
}

/// `int int_{[a,b]^2} |K(T,x) - K(T,y)|^2 / |x-y|^{1+2 beta}`.
pub fn kernel_seminorm(horizon: f64, h: f64, beta_: f64, a: f64, b: f64) -> f64 {
    2.0 * graded(a, b, &mut |x| {
        let kx = kernel(horizon, x, h);
        graded(a, x, &mut |y| {
            if x - y <= 0.0 {
                0.0
            } else {
                (kx - kernel(horizon, y, h)).powi(2) / (x - y).powf(1.0 + 2.0 * beta_)
            }
        })
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (v / xs.len() as f64).sqrt()
}

/// Largest `|empirical E[X_i X_j] - R_H| / SE` over `1 <= i <= j <= n` and
/// the number of entries beyond 3 standard errors.
pub fn covariance_z(paths: &[Vec<f64>], times: &[f64], h: f64) -> (f64, usize) {
    let n = times.len() - 1;
    let ns = paths.len() as f64;
    let mut worst: f64 = 0.0;
    let mut over = 0;
    for i in 1..=n {
        for j in i..=n {
            let (mut s, mut s2) = (0.0, 0.0);
            for p in paths {
                let v = p[i] * p[j];
                s += v;
                s2 += v * v;
            }
            let m = s / ns;
            let var = (s2 / ns - m * m) * ns / (ns - 1.0);
            let z = ((m - fbm_cov(times[i], times[j], h)) / (var / ns).sqrt()).abs();
            worst = worst.max(z);
            over += (z > 3.0) as usize;
        }
    }
    (worst, over)
}
