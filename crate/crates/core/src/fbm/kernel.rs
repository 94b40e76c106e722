//! Covariance and Volterra kernel of fractional Brownian motion for `H < 1/2`.

use statrs::function::beta::beta;

use crate::error::{domain, Result};
use crate::quadrature::{integrate_graded, integrate_power_weighted, integrate_singular, rule};

/// `R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
///
/// Accepts any `H` in `(0, 1)` so that the formula can be exercised outside
/// the rough regime.
pub fn covariance_rh(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("H = {hurst} must lie in (0, 1)"));
    }
    if !(t >= 0.0 && s >= 0.0) {
        return domain(format!("times must be nonnegative, got t = {t}, s = {s}"));
    }
    Ok(rh_unchecked(t, s, hurst))
}

pub(crate) fn rh_unchecked(t: f64, s: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// Normalising constant `c_H = sqrt(2H / ((1 - 2H) B(1 - 2H, H + 1/2)))`.
pub fn c_h(hurst: f64) -> f64 {
    (2.0 * hurst / ((1.0 - 2.0 * hurst) * beta(1.0 - 2.0 * hurst, hurst + 0.5))).sqrt()
}

pub(crate) fn check_rough_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 0.5 {
        Ok(())
    } else {
        domain(format!("H = {hurst} must lie in (0, 1/2)"))
    }
}

/// `K_H(t, s)`; zero off the simplex `s < t`.
pub fn kernel_kh(t: f64, s: f64, hurst: f64) -> Result<f64> {
    let k = Kernel::new(hurst)?;
    if !(s > 0.0) {
        return domain(format!("K_H(t, s) requires s > 0, got s = {s}"));
    }
    Ok(k.eval(t, s))
}

/// The Volterra kernel for a fixed Hurst index, with its quadrature helpers.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    hurst: f64,
    c_h: f64,
    /// `1 / (H + 1/2)`, the exponent of the singularity-removing substitution.
    p: f64,
}

impl Kernel {
    pub fn new(hurst: f64) -> Result<Self> {
        check_rough_hurst(hurst)?;
        Ok(Self { hurst, c_h: c_h(hurst), p: 1.0 / (hurst + 0.5) })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// `K_H(t, s)` for `s > 0`; returns 0 when `s >= t`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return 0.0;
        }
        let h = self.hurst;
        let first = (t / s).powf(h - 0.5) * (t - s).powf(h - 0.5);
        let second = (0.5 - h) * s.powf(0.5 - h) * self.inner_integral(t, s);
        self.c_h * (first + second)
    }

    /// `K_H(t, s) / (t - s)^{H - 1/2}`, which stays bounded as `s -> t`.
    pub fn eval_reduced(&self, t: f64, s: f64) -> f64 {
        if s >= t {
            return self.c_h;
        }
        let h = self.hurst;
        let first = (t / s).powf(h - 0.5);
        let second = (0.5 - h) * s.powf(0.5 - h) * (t - s).powf(0.5 - h) * self.inner_integral(t, s);
        self.c_h * (first + second)
    }

    /// `int_s^t u^{H-3/2} (u - s)^{H-1/2} du` after the substitution
    /// `u = s + v^p`, which makes the integrand `p (s + v^p)^{H - 3/2}`.
    /// Panels are graded geometrically towards `v = 0` where the remaining
    /// power-law behaviour lives.
    fn inner_integral(&self, t: f64, s: f64) -> f64 {
        let h = self.hurst;
        let p = self.p;
        let vmax = (t - s).powf(h + 0.5);
        // scale below which s dominates v^p
        let vstar = s.powf(h + 0.5);
        const RATIO: f64 = 0.2;
        let span = (vmax / (1e-2 * vstar)).max(1.0);
        let levels = ((span.ln() / (1.0 / RATIO).ln()).ceil() as usize).clamp(2, 120);
        p * integrate_graded(rule(16), 0.0, vmax, RATIO, levels, |v| (s + v.powf(p)).powf(h - 1.5))
    }

    /// `int_a^b K_H(t, u) du` for `0 <= a < b <= t`.
    pub fn cell_integral_in_s(&self, t: f64, a: f64, b: f64) -> f64 {
        debug_assert!(0.0 <= a && a < b && b <= t);
        let g = self.hurst - 0.5;
        let left = (a <= 0.0).then_some(g);
        let right = (b >= t).then_some(g);
        let f = |u: f64| self.eval(t, u);
        if left.is_some() || right.is_some() {
            return integrate_singular(rule(16), a, b, left, right, f);
        }
        let width = b - a;
        let gap = a.min(t - b);
        let r = if gap < 4.0 * width { rule(16) } else { rule(8) };
        r.integrate(a, b, f)
    }

    /// `int_a^b K_H(u, theta) du` for `0 < theta <= a < b`.
    pub fn cell_integral_in_t(&self, a: f64, b: f64, theta: f64) -> f64 {
        debug_assert!(0.0 < theta && theta <= a && a < b);
        let f = |u: f64| self.eval(u, theta);
        if a <= theta {
            return integrate_singular(rule(16), a, b, Some(self.hurst - 0.5), None, f);
        }
        let r = if a - theta < 4.0 * (b - a) { rule(16) } else { rule(8) };
        r.integrate(a, b, f)
    }

    /// Kernel reconstruction of the covariance,
    /// `int_0^{t ^ s} K_H(t, u) K_H(s, u) du`.
    pub fn covariance(&self, t: f64, s: f64) -> f64 {
        let m = t.min(s);
        if m <= 0.0 {
            return 0.0;
        }
        let g = self.hurst - 0.5;
        let diagonal = (t - s).abs() <= 1e-14 * m;
        let big = t.max(s);
        let f = |u: f64| self.eval(t, u) * self.eval(s, u);
        // split into several panels so that the non-leading power terms are resolved
        let cuts = [0.0, 0.25 * m, 0.5 * m, 0.75 * m];
        let mut acc = integrate_singular(rule(64), cuts[0], cuts[1], Some(2.0 * g), None, f);
        for w in cuts[1..].windows(2) {
            acc += rule(64).integrate(w[0], w[1], f);
        }
        // the factor (m - u)^{g} is applied analytically on the last panel
        acc += if diagonal {
            integrate_power_weighted(rule(64), cuts[3], m, None, Some(2.0 * g), |u| self.eval_reduced(m, u).powi(2))
        } else {
            integrate_power_weighted(rule(64), cuts[3], m, None, Some(g), |u| {
                self.eval_reduced(m, u) * self.eval(big, u)
            })
        };
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta_reg;

    /// Closed form of the inner integral through the incomplete beta function:
    /// `s^{2H-1} B(1-2H, H+1/2) I_{1 - s/t}(H+1/2, 1-2H)`.
    fn kernel_closed_form(t: f64, s: f64, h: f64) -> f64 {
        let a = 1.0 - 2.0 * h;
        let b = h + 0.5;
        let inner = s.powf(2.0 * h - 1.0) * beta(a, b) * beta_reg(b, a, 1.0 - s / t);
        c_h(h) * ((t / s).powf(h - 0.5) * (t - s).powf(h - 0.5) + (0.5 - h) * s.powf(0.5 - h) * inner)
    }

    /// Product-midpoint rule with `n` cells: the `(u - s)^{H - 1/2}` factor is
    /// integrated exactly on each cell, the smooth factor at the midpoint.
    fn kernel_brute_force(t: f64, s: f64, h: f64, n: usize) -> f64 {
        let g = h - 0.5;
        let du = (t - s) / n as f64;
        let mut inner = 0.0;
        for k in 0..n {
            let lo = k as f64 * du;
            let hi = lo + du;
            let mid = s + lo + 0.5 * du;
            let w = (hi.powf(g + 1.0) - lo.powf(g + 1.0)) / (g + 1.0);
            inner += mid.powf(h - 1.5) * w;
        }
        c_h(h) * ((t / s).powf(g) * (t - s).powf(g) + (0.5 - h) * s.powf(0.5 - h) * inner)
    }

    #[test]
    fn covariance_trivial_values() {
        assert_eq!(covariance_rh(1.0, 1.0, 0.25).unwrap(), 1.0);
        assert_eq!(covariance_rh(1.0, 0.0, 0.1).unwrap(), 0.0);
        assert!((covariance_rh(1.0, 0.5, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!(covariance_rh(1.0, 0.5, 1.2).is_err());
        assert!(covariance_rh(-1.0, 0.5, 0.3).is_err());
    }

    #[test]
    fn kernel_vanishes_off_simplex() {
        assert_eq!(kernel_kh(1.0, 1.5, 0.25).unwrap(), 0.0);
        assert!(kernel_kh(1.0, 0.0, 0.25).is_err());
        assert!(kernel_kh(1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn kernel_matches_brute_force_quadrature() {
        let v = kernel_kh(1.0, 0.5, 0.1).unwrap();
        let oracle = kernel_brute_force(1.0, 0.5, 0.1, 1_000_000);
        assert!(((v - oracle) / oracle).abs() < 1e-4, "{v} vs {oracle}");
    }

    #[test]
    fn kernel_matches_incomplete_beta_closed_form() {
        for &h in &[0.05, 0.1, 0.25, 0.4, 0.49] {
            for &(t, s) in &[(1.0, 0.5), (1.0, 1e-4), (1.0, 0.999), (3.0, 0.01), (0.2, 0.1)] {
                let v = Kernel::new(h).unwrap().eval(t, s);
                let exact = kernel_closed_form(t, s, h);
                assert!(((v - exact) / exact).abs() < 1e-8, "H={h} t={t} s={s}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn kernel_is_homogeneous() {
        let k = Kernel::new(0.2).unwrap();
        let c: f64 = 3.7;
        let lhs = k.eval(c * 0.9, c * 0.3);
        let rhs = c.powf(0.2 - 0.5) * k.eval(0.9, 0.3);
        assert!(((lhs - rhs) / rhs).abs() < 1e-10);
    }

    #[test]
    fn kernel_reconstructs_covariance() {
        for &h in &[0.02, 0.1, 0.25, 0.45] {
            let k = Kernel::new(h).unwrap();
            for &t in &[0.2, 0.6, 1.0] {
                for &s in &[0.2, 0.6, 1.0] {
                    let v = k.covariance(t, s);
                    let r = rh_unchecked(t, s, h);
                    assert!(((v - r) / r).abs() < 1e-5, "H={h} ({t},{s}): {v} vs {r}");
                }
            }
        }
    }

    #[test]
    fn cell_integrals_agree_with_fine_quadrature() {
        let k = Kernel::new(0.25).unwrap();
        // last cell (singular at u = t) vs closed-form-kernel product rule
        let t = 5.0;
        let v = k.cell_integral_in_s(t, 4.0, 5.0);
        let n = 200_000;
        let du = 1.0 / n as f64;
        // subtract the leading singular term and integrate it exactly
        let g = -0.25;
        let lead = |u: f64| c_h(0.25) * (t / u).powf(g) * (t - u).powf(g);
        let mut rest = 0.0;
        for i in 0..n {
            let u = 4.0 + (i as f64 + 0.5) * du;
            rest += (kernel_closed_form(t, u, 0.25) - lead(u)) * du;
        }
        let lead_int = integrate_singular(rule(64), 4.0, 5.0, None, Some(g), lead);
        let oracle = rest + lead_int;
        assert!(((v - oracle) / oracle).abs() < 1e-6, "{v} vs {oracle}");
    }
}
