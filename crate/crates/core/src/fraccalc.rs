//! Riemann–Liouville operators on uniform grids, the inverse of the
//! fractional Volterra operator for absolutely continuous inputs, and
//! Girsanov weights for drift-shifted fractional Brownian motion.
//!
//! Both one-sided operators use product integration: the input is replaced by
//! its piecewise-linear interpolant and the singular weight is integrated
//! exactly against it.

use std::path::Path;

use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::fbm::FbmPath;
use crate::flow::DriftField;
use crate::grid::TimeGrid;
use crate::quadrature::{integrate_power_weighted, rule};
use crate::table::{parse_f64, Table};

/// Real-valued function sampled at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn1D {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridFn1D {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs_diff(&self, other: &GridFn1D) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "f"]);
        t.meta("n_steps", self.grid.n_steps()).meta("t0", self.grid.t0()).meta("horizon", self.grid.horizon());
        for (x, v) in self.grid.nodes().zip(&self.values) {
            t.push_f64(&[x, *v]);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let get = |k: &str| t.get_meta(k).ok_or_else(|| Error::Parse(format!("missing metadata `{k}`")));
        let n: usize = get("n_steps")?.parse().map_err(|_| Error::Parse("bad n_steps".into()))?;
        let grid = TimeGrid::new(parse_f64(get("t0")?)?, parse_f64(get("horizon")?)?, n)?;
        let col = t.column("f").ok_or_else(|| Error::Parse("missing column `f`".into()))?;
        let values = t.rows.iter().map(|r| parse_f64(&r[col])).collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write_path(path)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        domain(format!("alpha = {alpha} must lie in (0, 1)"))
    }
}

fn check_origin(f: &GridFn1D, a: f64) -> Result<()> {
    if (a - f.grid.t0()).abs() > 1e-12 * f.grid.horizon().max(1.0) {
        return domain(format!("base point {a} must equal the grid origin {}", f.grid.t0()));
    }
    Ok(())
}

/// `I^alpha_{a+} f` at every node.
pub fn frac_integral_left(f: &GridFn1D, alpha: f64, a: f64) -> Result<GridFn1D> {
    check_alpha(alpha)?;
    check_origin(f, a)?;
    let n = f.grid.n_steps();
    let fv = &f.values;
    let ap1 = alpha + 1.0;
    // p[m] = m^{alpha+1}
    let p: Vec<f64> = (0..=n).map(|m| (m as f64).powf(ap1)).collect();
    let scale = f.grid.dt().powf(alpha) / gamma(alpha + 2.0);
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        let fi = i as f64;
        let a0 = p[i - 1] - (fi - 1.0 - alpha) * fi.powf(alpha);
        let mut acc = a0 * fv[0] + fv[i];
        for k in 1..i {
            let m = i - k;
            acc += (p[m + 1] - 2.0 * p[m] + p[m - 1]) * fv[k];
        }
        out[i] = scale * acc;
    }
    GridFn1D::new(f.grid, out)
}

/// `D^alpha_{a+} f` through the Marchaud-type representation
/// `(f(x) (x-a)^{-alpha} + alpha int_a^x (f(x) - f(y)) (x - y)^{-alpha-1} dy) / Gamma(1 - alpha)`,
/// with every cell integral evaluated exactly for the interpolant.
///
/// At the base point the value is 0 when `f(a) = 0` and infinite otherwise.
pub fn frac_derivative_left(f: &GridFn1D, alpha: f64, a: f64) -> Result<GridFn1D> {
    check_alpha(alpha)?;
    check_origin(f, a)?;
    let n = f.grid.n_steps();
    let dt = f.grid.dt();
    let fv = &f.values;
    let slope: Vec<f64> = fv.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    // r^{-alpha} and r^{1-alpha} at r = m dt
    let rm: Vec<f64> = (0..=n).map(|m| (m as f64 * dt).powf(-alpha)).collect();
    let r1m: Vec<f64> = (0..=n).map(|m| (m as f64 * dt).powf(1.0 - alpha)).collect();
    let g = gamma(1.0 - alpha);
    let mut out = vec![0.0; n + 1];
    out[0] = if fv[0] == 0.0 { 0.0 } else { fv[0].signum() * f64::INFINITY };
    for i in 1..=n {
        // last cell: the constant part of the numerator vanishes
        let mut acc = slope[i - 1] * r1m[1] / (1.0 - alpha);
        for k in 0..i - 1 {
            let m0 = i - k;
            let r0 = m0 as f64 * dt;
            let s = slope[k];
            let c = fv[i] - fv[k] - s * r0;
            acc += c * (rm[m0 - 1] - rm[m0]) / alpha + s * (r1m[m0] - r1m[m0 - 1]) / (1.0 - alpha);
        }
        out[i] = (fv[i] * rm[i] + alpha * acc) / g;
    }
    GridFn1D::new(f.grid, out)
}

/// Precomputed discretisation of
/// `(K_H^{-1} phi)(s) = s^{H-1/2} I^{1/2-H}_{0+}[u^{1/2-H} phi'(u)](s)`
/// on a grid with `n` steps.
///
/// `phi'` is the forward difference on each cell, so the value at node `i`
/// only involves `phi` on nodes `0..=i`.
#[derive(Debug, Clone)]
pub struct KhInverse {
    hurst: f64,
    n: usize,
    /// `W(i, k) = int_k^{k+1} (i - y)^{alpha-1} y^alpha dy`, rows `i = 1..=n` packed.
    weights: Vec<f64>,
}

fn row_offset(i: usize) -> usize {
    i * (i - 1) / 2
}

impl KhInverse {
    pub fn new(hurst: f64, n: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 0.5) {
            return domain(format!("H = {hurst} must lie in (0, 1/2)"));
        }
        let alpha = 0.5 - hurst;
        let mut weights = Vec::with_capacity(row_offset(n + 1));
        for i in 1..=n {
            let x = i as f64;
            for k in 0..i {
                let (a, b) = (k as f64, (k + 1) as f64);
                let f = |y: f64| (x - y).powf(alpha - 1.0) * y.powf(alpha);
                let w = if k == 0 && i == 1 {
                    integrate_power_weighted(rule(16), a, b, Some(alpha), Some(alpha - 1.0), |_| 1.0)
                } else if k == 0 {
                    integrate_power_weighted(rule(16), a, b, Some(alpha), None, |y| (x - y).powf(alpha - 1.0))
                } else if k + 1 == i {
                    integrate_power_weighted(rule(16), a, b, None, Some(alpha - 1.0), |y| y.powf(alpha))
                } else if x - b < 4.0 {
                    rule(16).integrate(a, b, f)
                } else {
                    rule(8).integrate(a, b, f)
                };
                weights.push(w);
            }
        }
        Ok(Self { hurst, n, weights })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Values at nodes `1..=n`; index 0 of the result is left at 0.
    fn apply_interior(&self, phi: &[f64], dt: f64) -> Vec<f64> {
        let alpha = 0.5 - self.hurst;
        let n = self.n;
        let d: Vec<f64> = phi.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        let pre = dt.powf(alpha) / gamma(alpha);
        let mut out = vec![0.0; n + 1];
        for i in 1..=n {
            let row = &self.weights[row_offset(i)..row_offset(i) + i];
            let acc: f64 = row.iter().zip(&d).map(|(w, dk)| w * dk).sum();
            out[i] = pre * (i as f64).powf(-alpha) * acc;
        }
        out
    }

    /// Full output including the extrapolated value at `s = 0`.
    pub fn apply(&self, phi: &GridFn1D) -> Result<GridFn1D> {
        if phi.grid.n_steps() != self.n {
            return Err(Error::Grid(format!("operator built for {} steps, input has {}", self.n, phi.grid.n_steps())));
        }
        if phi.grid.t0() != 0.0 {
            return Err(Error::Grid("K_H^{-1} needs a grid starting at 0".into()));
        }
        let mut out = self.apply_interior(&phi.values, phi.grid.dt());
        out[0] = match self.n {
            1 => out[1],
            2 => 2.0 * out[1] - out[2],
            _ => (4.0 * out[1] + out[2] - 2.0 * out[3]) / 3.0,
        };
        GridFn1D::new(phi.grid, out)
    }
}

/// One-shot `K_H^{-1} phi`; `phi(0)` must vanish.
pub fn kh_inverse_ac(phi: &GridFn1D, hurst: f64) -> Result<GridFn1D> {
    if phi.values[0].abs() > 1e-12 {
        return domain(format!("phi(0) = {} must vanish", phi.values[0]));
    }
    KhInverse::new(hurst, phi.grid.n_steps())?.apply(phi)
}

/// `xi_T` together with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GirsanovWeight {
    pub weight: f64,
    pub log_weight: f64,
}

/// Drift integral `phi(t_i) = int_0^{t_i} b(r, B_r) dr` by the trapezoid rule,
/// row-major `(n + 1) x d`.
pub fn drift_integral(drift: &dyn DriftField, path: &FbmPath) -> Result<Vec<f64>> {
    let d = path.dim();
    if drift.dim() != d {
        return Err(Error::Dimension(format!("drift dimension {} vs path dimension {d}", drift.dim())));
    }
    let grid = path.grid();
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut b = vec![0.0; (n + 1) * d];
    for i in 0..=n {
        drift.eval(grid.node(i), path.value(i), &mut b[i * d..(i + 1) * d]);
    }
    let mut phi = vec![0.0; (n + 1) * d];
    for i in 1..=n {
        for k in 0..d {
            phi[i * d + k] = phi[(i - 1) * d + k] + 0.5 * dt * (b[(i - 1) * d + k] + b[i * d + k]);
        }
    }
    Ok(phi)
}

/// Girsanov weight removing `int_0^. b(r, B_r) dr` from a Volterra path.
///
/// The stochastic integral is a left-point sum; the integrand at `s = 0` is
/// taken as its limit 0 so that every term is adapted.
pub fn girsanov_weight_with(op: &KhInverse, drift: &dyn DriftField, path: &FbmPath) -> Result<GirsanovWeight> {
    let dw = path
        .wiener_increments()
        .ok_or_else(|| Error::Domain("Girsanov weight needs a path with Wiener increments".into()))?;
    let grid = path.grid();
    let n = grid.n_steps();
    if op.n != n {
        return Err(Error::Grid(format!("operator built for {} steps, path has {n}", op.n)));
    }
    let d = path.dim();
    let dt = grid.dt();
    let phi = drift_integral(drift, path)?;
    let mut stoch = 0.0;
    let mut energy = 0.0;
    let mut coord = vec![0.0; n + 1];
    for k in 0..d {
        for (i, c) in coord.iter_mut().enumerate() {
            *c = phi[i * d + k];
        }
        let psi = op.apply_interior(&coord, dt);
        for j in 1..n {
            stoch += psi[j] * dw[j * d + k];
            energy += psi[j] * psi[j];
        }
    }
    let log_weight = -stoch - 0.5 * energy * dt;
    Ok(GirsanovWeight { weight: log_weight.exp(), log_weight })
}

/// Girsanov weight; `hurst` must match the path's generator.
pub fn girsanov_weight(drift: &dyn DriftField, path: &FbmPath, hurst: f64) -> Result<GirsanovWeight> {
    let op = KhInverse::new(hurst, path.grid().n_steps())?;
    girsanov_weight_with(&op, drift, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::unit(1.0, n).unwrap()
    }

    #[test]
    fn integral_of_zero_and_one() {
        let z = GridFn1D::from_fn(grid(64), |_| 0.0);
        assert!(frac_integral_left(&z, 0.3, 0.0).unwrap().values().iter().all(|v| *v == 0.0));
        let one = GridFn1D::from_fn(grid(64), |_| 1.0);
        let r = frac_integral_left(&one, 0.5, 0.0).unwrap();
        assert!((r.values()[64] - 1.128_379_167_1).abs() < 1e-9);
        for (x, v) in grid(64).nodes().zip(r.values()) {
            assert!((v - x.powf(0.5) / gamma(1.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn integral_of_identity_is_exact() {
        let f = GridFn1D::from_fn(grid(16), |x| x);
        let r = frac_integral_left(&f, 0.5, 0.0).unwrap();
        assert!((r.values()[16] - 0.752_252_778_1).abs() < 1e-9);
    }

    #[test]
    fn integral_of_quadratic_matches_power_rule() {
        let alpha = 0.3;
        let f = GridFn1D::from_fn(grid(512), |x| x * x);
        let r = frac_integral_left(&f, alpha, 0.0).unwrap();
        let exact = gamma(3.0) / gamma(3.0 + alpha);
        assert!((r.values()[512] - exact).abs() < 1e-5);
    }

    #[test]
    fn derivative_of_constant() {
        let one = GridFn1D::from_fn(grid(64), |_| 1.0);
        let r = frac_derivative_left(&one, 0.4, 0.0).unwrap();
        assert!(r.values()[0].is_infinite());
        for (x, v) in grid(64).nodes().zip(r.values()).skip(1) {
            let exact = x.powf(-0.4) / gamma(0.6);
            assert!((v - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn derivative_of_identity_matches_power_rule() {
        let f = GridFn1D::from_fn(grid(32), |x| x);
        let r = frac_derivative_left(&f, 0.5, 0.0).unwrap();
        for (x, v) in grid(32).nodes().zip(r.values()) {
            let exact = x.powf(0.5) / gamma(1.5);
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_on_sine() {
        let f = GridFn1D::from_fn(grid(2048), f64::sin);
        let i = frac_integral_left(&f, 0.5, 0.0).unwrap();
        let back = frac_derivative_left(&i, 0.5, 0.0).unwrap();
        assert!(back.max_abs_diff(&f) <= 1e-3, "{}", back.max_abs_diff(&f));
    }

    #[test]
    fn kh_inverse_of_linear_function() {
        let h = 0.25;
        let alpha = 0.5 - h;
        let c = 1.7;
        let g = grid(200);
        let phi = GridFn1D::from_fn(g, |t| c * t);
        let psi = kh_inverse_ac(&phi, h).unwrap();
        let k = c * gamma(alpha + 1.0) / gamma(2.0 * alpha + 1.0);
        for (s, v) in g.nodes().zip(psi.values()).skip(1) {
            let exact = k * s.powf(alpha);
            assert!((v - exact).abs() <= 1e-3 * exact, "s={s} {v} {exact}");
        }
    }

    #[test]
    fn kh_inverse_rejects_bad_input() {
        let phi = GridFn1D::from_fn(grid(8), |t| t + 1.0);
        assert!(kh_inverse_ac(&phi, 0.25).is_err());
        let phi = GridFn1D::from_fn(grid(8), |t| t);
        assert!(kh_inverse_ac(&phi, 0.5).is_err());
    }
}
