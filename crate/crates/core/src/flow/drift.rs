//! Bounded drift fields, the built-in registry and its mollified family.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::quadrature::{rule, Rule};

/// Largest spatial dimension handled with stack buffers.
pub const MAX_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftKind {
    Smooth,
    Measurable,
}

/// A time-space vector field `b(t, x)` with declared bounds.
///
/// Jacobians are row-major `d x d` (`out[i * d + j] = d b_i / d x_j`);
/// Hessians are `d x d x d` (`out[(i * d + j) * d + k]`).
pub trait DriftField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Bound on the Euclidean norm of `b`.
    fn sup_norm(&self) -> f64;
    /// Bound on `int sup_t |b(t, x)| dx`; infinite when not integrable.
    fn l1_norm(&self) -> f64;
    fn kind(&self) -> DriftKind;
    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn name(&self) -> String;
}

fn not_smooth<T>(name: &str) -> Result<T> {
    Err(Error::NotSmooth(name.to_string()))
}

/// Built-in drifts.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Zero { dim: usize },
    Constant { c: Vec<f64> },
    /// `b(x) = A x`, `A` row-major.
    Linear { dim: usize, a: Vec<f64> },
    /// Componentwise sign, `sign(0) = 0`.
    Sign { dim: usize },
    /// Componentwise indicator of `[lo, hi]`.
    Indicator { dim: usize, lo: f64, hi: f64 },
    /// `amp * exp(-|x - center|^2 / (2 width^2))` in every component.
    Bump { amp: f64, center: Vec<f64>, width: f64 },
    /// Planar field `(-1)^{floor(x1/cell) + floor(x2/cell)}` pointing along
    /// `e1` during the first half of each time period and along `e2` during
    /// the second.
    Checkerboard { cell: f64, period: f64 },
    Sum(Vec<Drift>),
    Scaled(f64, Box<Drift>),
    Mollified(Box<Mollified>),
}

impl Drift {
    pub fn zero(dim: usize) -> Self {
        Drift::Zero { dim }
    }

    pub fn constant(c: Vec<f64>) -> Self {
        Drift::Constant { c }
    }

    pub fn linear(dim: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != dim * dim {
            return Err(Error::Dimension(format!("linear drift needs {} entries, got {}", dim * dim, a.len())));
        }
        Ok(Drift::Linear { dim, a })
    }

    pub fn sign(dim: usize) -> Self {
        Drift::Sign { dim }
    }

    pub fn indicator(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Domain(format!("indicator needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Drift::Indicator { dim, lo, hi })
    }

    pub fn bump(amp: f64, center: Vec<f64>, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Domain(format!("bump width {width} must be positive")));
        }
        Ok(Drift::Bump { amp, center, width })
    }

    pub fn checkerboard(cell: f64, period: f64) -> Result<Self> {
        if !(cell > 0.0 && period > 0.0) {
            return Err(Error::Domain("checkerboard cell and period must be positive".into()));
        }
        Ok(Drift::Checkerboard { cell, period })
    }

    pub fn sum(parts: Vec<Drift>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::Domain("empty drift sum".into()));
        };
        let d = first.dim();
        if parts.iter().any(|p| p.dim() != d) {
            return Err(Error::Dimension("summands have different dimensions".into()));
        }
        Ok(Drift::Sum(parts))
    }

    pub fn scaled(factor: f64, base: Drift) -> Self {
        Drift::Scaled(factor, Box::new(base))
    }

    /// Member `level` of the mollified family (`eps = 2^{-level}`).
    pub fn mollified(self, level: u32) -> Result<Self> {
        Ok(Drift::Mollified(Box::new(Mollified::new(self, level)?)))
    }

    /// Parameters of the time-dependent part, if any.
    pub fn is_time_dependent(&self) -> bool {
        match self {
            Drift::Checkerboard { .. } => true,
            Drift::Sum(p) => p.iter().any(Drift::is_time_dependent),
            Drift::Scaled(_, b) => b.is_time_dependent(),
            Drift::Mollified(m) => m.base.is_time_dependent(),
            _ => false,
        }
    }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn checker_sign(v: f64, cell: f64) -> f64 {
    if (v / cell).floor().rem_euclid(2.0) == 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn checker_direction(t: f64, period: f64) -> usize {
    if (t / period).rem_euclid(1.0) < 0.5 {
        0
    } else {
        1
    }
}

impl DriftField for Drift {
    fn dim(&self) -> usize {
        match self {
            Drift::Zero { dim } | Drift::Linear { dim, .. } | Drift::Sign { dim } | Drift::Indicator { dim, .. } => *dim,
            Drift::Constant { c } => c.len(),
            Drift::Bump { center, .. } => center.len(),
            Drift::Checkerboard { .. } => 2,
            Drift::Sum(p) => p[0].dim(),
            Drift::Scaled(_, b) => b.dim(),
            Drift::Mollified(m) => m.base.dim(),
        }
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero { .. } => out.fill(0.0),
            Drift::Constant { c } => out.copy_from_slice(c),
            Drift::Linear { dim, a } => {
                for i in 0..*dim {
                    out[i] = (0..*dim).map(|j| a[i * dim + j] * x[j]).sum();
                }
            }
            Drift::Sign { .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = sgn(*v);
                }
            }
            Drift::Indicator { lo, hi, .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = if *lo <= *v && *v <= *hi { 1.0 } else { 0.0 };
                }
            }
            Drift::Bump { amp, center, width } => {
                let g = bump_profile(x, center, *width);
                out.fill(amp * g);
            }
            Drift::Checkerboard { cell, period } => {
                let s = checker_sign(x[0], *cell) * checker_sign(x[1], *cell);
                out.fill(0.0);
                out[checker_direction(t, *period)] = s;
            }
            Drift::Sum(parts) => {
                let d = out.len();
                let mut buf = [0.0; MAX_DIM];
                out.fill(0.0);
                for p in parts {
                    p.eval(t, x, &mut buf[..d]);
                    for k in 0..d {
                        out[k] += buf[k];
                    }
                }
            }
            Drift::Scaled(f, b) => {
                b.eval(t, x, out);
                for o in out.iter_mut() {
                    *o *= f;
                }
            }
            Drift::Mollified(m) => m.eval(t, x, out),
        }
    }

    fn sup_norm(&self) -> f64 {
        match self {
            Drift::Zero { .. } => 0.0,
            Drift::Constant { c } => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Drift::Linear { a, .. } => {
                if a.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Drift::Sign { dim } | Drift::Indicator { dim, .. } => (*dim as f64).sqrt(),
            Drift::Bump { amp, center, .. } => amp.abs() * (center.len() as f64).sqrt(),
            Drift::Checkerboard { .. } => 1.0,
            Drift::Sum(p) => p.iter().map(Drift::sup_norm).sum(),
            Drift::Scaled(f, b) => f.abs() * b.sup_norm(),
            Drift::Mollified(m) => m.base.sup_norm(),
        }
    }

    fn l1_norm(&self) -> f64 {
        match self {
            Drift::Zero { .. } => 0.0,
            Drift::Constant { c } => {
                if c.iter().all(|v| *v == 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Drift::Linear { .. } => self.sup_norm(),
            Drift::Sign { .. } | Drift::Checkerboard { .. } => f64::INFINITY,
            Drift::Indicator { dim, lo, hi } => {
                if *dim == 1 {
                    hi - lo
                } else {
                    f64::INFINITY
                }
            }
            Drift::Bump { amp, center, width } => {
                let d = center.len() as f64;
                amp.abs() * d.sqrt() * (2.0 * std::f64::consts::PI).powf(d / 2.0) * width.powf(d)
            }
            Drift::Sum(p) => p.iter().map(Drift::l1_norm).sum(),
            Drift::Scaled(f, b) => {
                if *f == 0.0 {
                    0.0
                } else {
                    f.abs() * b.l1_norm()
                }
            }
            Drift::Mollified(m) => m.base.l1_norm(),
        }
    }

    fn kind(&self) -> DriftKind {
        match self {
            Drift::Zero { .. } | Drift::Constant { .. } | Drift::Linear { .. } | Drift::Bump { .. } => DriftKind::Smooth,
            Drift::Sign { .. } | Drift::Indicator { .. } | Drift::Checkerboard { .. } => DriftKind::Measurable,
            Drift::Sum(p) => {
                if p.iter().all(|d| d.kind() == DriftKind::Smooth) {
                    DriftKind::Smooth
                } else {
                    DriftKind::Measurable
                }
            }
            Drift::Scaled(f, b) => {
                if *f == 0.0 {
                    DriftKind::Smooth
                } else {
                    b.kind()
                }
            }
            Drift::Mollified(_) => DriftKind::Smooth,
        }
    }

    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        match self {
            Drift::Zero { .. } | Drift::Constant { .. } => out.fill(0.0),
            Drift::Linear { a, .. } => out.copy_from_slice(a),
            Drift::Bump { amp, center, width } => {
                let g = bump_profile(x, center, *width);
                let w2 = width * width;
                for i in 0..d {
                    for j in 0..d {
                        out[i * d + j] = -amp * g * (x[j] - center[j]) / w2;
                    }
                }
            }
            Drift::Sum(parts) => {
                let mut buf = [0.0; MAX_DIM * MAX_DIM];
                out.fill(0.0);
                for p in parts {
                    p.jacobian(t, x, &mut buf[..d * d])?;
                    for k in 0..d * d {
                        out[k] += buf[k];
                    }
                }
            }
            Drift::Scaled(f, b) => {
                if *f == 0.0 {
                    out.fill(0.0);
                } else {
                    b.jacobian(t, x, out)?;
                    for o in out.iter_mut() {
                        *o *= f;
                    }
                }
            }
            Drift::Mollified(m) => m.jacobian(t, x, out),
            Drift::Sign { .. } | Drift::Indicator { .. } | Drift::Checkerboard { .. } => return not_smooth(&self.name()),
        }
        Ok(())
    }

    fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        match self {
            Drift::Zero { .. } | Drift::Constant { .. } | Drift::Linear { .. } => out.fill(0.0),
            Drift::Bump { amp, center, width } => {
                let g = bump_profile(x, center, *width);
                let w2 = width * width;
                for i in 0..d {
                    for j in 0..d {
                        for k in 0..d {
                            let delta = if j == k { 1.0 } else { 0.0 };
                            let v = (x[j] - center[j]) * (x[k] - center[k]) / (w2 * w2) - delta / w2;
                            out[(i * d + j) * d + k] = amp * g * v;
                        }
                    }
                }
            }
            Drift::Sum(parts) => {
                let mut buf = [0.0; MAX_DIM * MAX_DIM * MAX_DIM];
                let m = d * d * d;
                out.fill(0.0);
                for p in parts {
                    p.hessian(t, x, &mut buf[..m])?;
                    for k in 0..m {
                        out[k] += buf[k];
                    }
                }
            }
            Drift::Scaled(f, b) => {
                if *f == 0.0 {
                    out.fill(0.0);
                } else {
                    b.hessian(t, x, out)?;
                    for o in out.iter_mut() {
                        *o *= f;
                    }
                }
            }
            Drift::Mollified(m) => m.hessian(t, x, out),
            Drift::Sign { .. } | Drift::Indicator { .. } | Drift::Checkerboard { .. } => return not_smooth(&self.name()),
        }
        Ok(())
    }

    fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        match self {
            Drift::Zero { .. } => write!(f, "zero()"),
            Drift::Constant { c } => write!(f, "constant({})", list(c)),
            Drift::Linear { a, .. } => write!(f, "linear({})", list(a)),
            Drift::Sign { .. } => write!(f, "sign()"),
            Drift::Indicator { lo, hi, .. } => write!(f, "indicator({lo},{hi})"),
            Drift::Bump { amp, center, width } => write!(f, "bump({amp},{},{width})", list(center)),
            Drift::Checkerboard { cell, period } => write!(f, "checkerboard({cell},{period})"),
            Drift::Sum(p) => {
                let parts: Vec<String> = p.iter().map(|d| d.to_string()).collect();
                write!(f, "{}", parts.join(" + "))
            }
            Drift::Scaled(s, b) => match **b {
                Drift::Sum(_) => write!(f, "{s}*({b})"),
                _ => write!(f, "{s}*{b}"),
            },
            Drift::Mollified(m) => write!(f, "mollified({}, {})", m.base, m.level),
        }
    }
}

fn bump_profile(x: &[f64], center: &[f64], width: f64) -> f64 {
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    (-r2 / (2.0 * width * width)).exp()
}

// ---------------------------------------------------------------------------
// mollification

const CDF_INTERVALS: usize = 2048;
const STENCIL: usize = 9;

/// Standard bump kernel `C exp(-1 / (1 - y^2))` on `(-1, 1)` and its CDF table.
struct Kernel1D {
    norm: f64,
    cdf: Vec<f64>,
}

fn raw_bump(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - y * y)).exp()
    }
}

fn kernel1d() -> &'static Kernel1D {
    static K: OnceLock<Kernel1D> = OnceLock::new();
    K.get_or_init(|| {
        let h = 2.0 / CDF_INTERVALS as f64;
        let mut cdf = vec![0.0; CDF_INTERVALS + 1];
        for i in 0..CDF_INTERVALS {
            let a = -1.0 + i as f64 * h;
            cdf[i + 1] = cdf[i] + rule(8).integrate(a, a + h, raw_bump);
        }
        let norm = cdf[CDF_INTERVALS];
        for c in cdf.iter_mut() {
            *c /= norm;
        }
        Kernel1D { norm: 1.0 / norm, cdf }
    })
}

/// Mollifier density `rho(y)`.
pub fn mollifier(y: f64) -> f64 {
    kernel1d().norm * raw_bump(y)
}

/// `rho'(y)`.
pub fn mollifier_derivative(y: f64) -> f64 {
    if y.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - y * y;
    mollifier(y) * (-2.0 * y / (q * q))
}

/// `int_{-1}^y rho`, cubic Hermite interpolation of the tabulated CDF with
/// the exact density as slope.
pub fn mollifier_cdf(y: f64) -> f64 {
    if y <= -1.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let k = kernel1d();
    let h = 2.0 / CDF_INTERVALS as f64;
    let u = (y + 1.0) / h;
    let i = (u.floor() as usize).min(CDF_INTERVALS - 1);
    let s = u - i as f64;
    let y0 = -1.0 + i as f64 * h;
    let (f0, f1) = (k.cdf[i], k.cdf[i + 1]);
    let (m0, m1) = (mollifier(y0) * h, mollifier(y0 + h) * h);
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * f0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * f1 + (s3 - s2) * m1
}

/// Piecewise-constant function of one variable, described by its jumps.
#[derive(Debug, Clone, PartialEq)]
enum Step1D {
    /// Finitely many jumps `(position, size)` above the constant `left`.
    Finite { left: f64, jumps: Vec<(f64, f64)> },
    /// `(-1)^{floor(y / cell)}`.
    Alternating { cell: f64 },
}

impl Step1D {
    fn value(&self, y: f64) -> f64 {
        match self {
            Step1D::Finite { left, jumps } => left + jumps.iter().filter(|(p, _)| *p <= y).map(|(_, s)| s).sum::<f64>(),
            Step1D::Alternating { cell } => checker_sign(y, *cell),
        }
    }

    /// Calls `f(position, size)` for each jump in `(lo, hi)`.
    fn for_jumps(&self, lo: f64, hi: f64, mut f: impl FnMut(f64, f64)) {
        match self {
            Step1D::Finite { jumps, .. } => {
                for &(p, s) in jumps {
                    if lo < p && p < hi {
                        f(p, s);
                    }
                }
            }
            Step1D::Alternating { cell } => {
                let first = (lo / cell).floor() as i64 + 1;
                let mut m = first;
                loop {
                    let p = m as f64 * cell;
                    if p >= hi {
                        break;
                    }
                    if p > lo {
                        let size = if m.rem_euclid(2) == 0 { 2.0 } else { -2.0 };
                        f(p, size);
                    }
                    m += 1;
                }
            }
        }
    }

    /// `(g * rho_eps)(y)` and its first two derivatives.
    fn smoothed(&self, y: f64, eps: f64) -> [f64; 3] {
        let mut v = self.value(y - eps);
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        self.for_jumps(y - eps, y + eps, |p, s| {
            let z = (y - p) / eps;
            v += s * mollifier_cdf(z);
            d1 += s * mollifier(z) / eps;
            d2 += s * mollifier_derivative(z) / (eps * eps);
        });
        [v, d1, d2]
    }
}

/// Smoothed representation of a base drift.
#[derive(Debug, Clone, PartialEq)]
enum Smoothed {
    /// Already smooth and invariant under convolution with a symmetric kernel.
    Unchanged(Drift),
    /// Every component is `g(x_k)`.
    Componentwise { dim: usize, g: Step1D },
    /// Planar checkerboard: product of two alternating steps.
    Checker { cell: f64, period: f64 },
    Sum(Vec<Smoothed>),
    Scaled(f64, Box<Smoothed>),
    /// Fallback: tensor Gauss–Legendre stencil on a smooth base.
    Stencil(Drift),
}

fn decompose(base: &Drift) -> Smoothed {
    match base {
        Drift::Zero { .. } | Drift::Constant { .. } | Drift::Linear { .. } => Smoothed::Unchanged(base.clone()),
        Drift::Sign { dim } => Smoothed::Componentwise {
            dim: *dim,
            g: Step1D::Finite { left: -1.0, jumps: vec![(0.0, 2.0)] },
        },
        Drift::Indicator { dim, lo, hi } => Smoothed::Componentwise {
            dim: *dim,
            g: Step1D::Finite { left: 0.0, jumps: vec![(*lo, 1.0), (*hi, -1.0)] },
        },
        Drift::Checkerboard { cell, period } => Smoothed::Checker { cell: *cell, period: *period },
        Drift::Sum(p) => Smoothed::Sum(p.iter().map(decompose).collect()),
        Drift::Scaled(f, b) => Smoothed::Scaled(*f, Box::new(decompose(b))),
        Drift::Bump { .. } | Drift::Mollified(_) => Smoothed::Stencil(base.clone()),
    }
}

/// Convolution of a base drift with the tensor kernel at scale `2^{-level}`.
///
/// Step-type drifts are smoothed in closed form through the kernel CDF, which
/// keeps every member genuinely smooth; smooth bases use a fixed
/// `9^d` Gauss–Legendre stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified {
    base: Drift,
    level: u32,
    eps: f64,
    repr: Smoothed,
}

impl Mollified {
    pub fn new(base: Drift, level: u32) -> Result<Self> {
        if level > 40 {
            return Err(Error::Domain(format!("mollification level {level} too fine")));
        }
        let repr = decompose(&base);
        if contains_stencil(&repr) && base.dim() > 3 {
            return Err(Error::Dimension("stencil mollification is limited to d <= 3".into()));
        }
        Ok(Self { eps: 0.5_f64.powi(level as i32), base, level, repr })
    }

    pub fn base(&self) -> &Drift {
        &self.base
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        eval_smoothed(&self.repr, self.eps, t, x, out, Order::Value);
    }

    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        eval_smoothed(&self.repr, self.eps, t, x, out, Order::Jacobian);
    }

    fn hessian(&self, t: f64, x: &[f64], out: &mut [f64]) {
        eval_smoothed(&self.repr, self.eps, t, x, out, Order::Hessian);
    }
}

fn contains_stencil(s: &Smoothed) -> bool {
    match s {
        Smoothed::Stencil(_) => true,
        Smoothed::Sum(p) => p.iter().any(contains_stencil),
        Smoothed::Scaled(_, b) => contains_stencil(b),
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    Value,
    Jacobian,
    Hessian,
}

fn out_len(d: usize, order: Order) -> usize {
    match order {
        Order::Value => d,
        Order::Jacobian => d * d,
        Order::Hessian => d * d * d,
    }
}

fn eval_smoothed(s: &Smoothed, eps: f64, t: f64, x: &[f64], out: &mut [f64], order: Order) {
    let d = x.len();
    match s {
        Smoothed::Unchanged(b) => match order {
            Order::Value => b.eval(t, x, out),
            Order::Jacobian => b.jacobian(t, x, out).expect("smooth base"),
            Order::Hessian => b.hessian(t, x, out).expect("smooth base"),
        },
        Smoothed::Componentwise { g, .. } => {
            out.fill(0.0);
            for k in 0..d {
                let [v, d1, d2] = g.smoothed(x[k], eps);
                match order {
                    Order::Value => out[k] = v,
                    Order::Jacobian => out[k * d + k] = d1,
                    Order::Hessian => out[(k * d + k) * d + k] = d2,
                }
            }
        }
        Smoothed::Checker { cell, period } => {
            let g = Step1D::Alternating { cell: *cell };
            let a = g.smoothed(x[0], eps);
            let b = g.smoothed(x[1], eps);
            let dir = checker_direction(t, *period);
            out.fill(0.0);
            match order {
                Order::Value => out[dir] = a[0] * b[0],
                Order::Jacobian => {
                    out[dir * 2] = a[1] * b[0];
                    out[dir * 2 + 1] = a[0] * b[1];
                }
                Order::Hessian => {
                    out[dir * 4] = a[2] * b[0];
                    out[dir * 4 + 1] = a[1] * b[1];
                    out[dir * 4 + 2] = a[1] * b[1];
                    out[dir * 4 + 3] = a[0] * b[2];
                }
            }
        }
        Smoothed::Sum(parts) => {
            let m = out_len(d, order);
            let mut buf = vec![0.0; m];
            out.fill(0.0);
            for p in parts {
                eval_smoothed(p, eps, t, x, &mut buf, order);
                for k in 0..m {
                    out[k] += buf[k];
                }
            }
        }
        Smoothed::Scaled(f, b) => {
            eval_smoothed(b, eps, t, x, out, order);
            for o in out.iter_mut() {
                *o *= f;
            }
        }
        Smoothed::Stencil(base) => stencil(base, eps, t, x, out, order),
    }
}

/// Nodes and normalised weights `w_j rho(z_j)` of the one-dimensional stencil.
fn stencil_1d() -> &'static [(f64, f64)] {
    static S: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    S.get_or_init(|| {
        let r = Rule::new(STENCIL);
        let raw: Vec<(f64, f64)> = r.nodes().iter().zip(r.weights()).map(|(z, w)| (*z, w * raw_bump(*z))).collect();
        let total: f64 = raw.iter().map(|p| p.1).sum();
        raw.into_iter().map(|(z, w)| (z, w / total)).collect()
    })
}

fn stencil(base: &Drift, eps: f64, t: f64, x: &[f64], out: &mut [f64], order: Order) {
    let d = x.len();
    let st = stencil_1d();
    let m = out_len(d, order);
    let mut buf = vec![0.0; m];
    let mut y = [0.0; MAX_DIM];
    out.fill(0.0);
    let total = st.len().pow(d as u32);
    for flat in 0..total {
        let mut idx = flat;
        let mut w = 1.0;
        for k in 0..d {
            let (z, wk) = st[idx % st.len()];
            idx /= st.len();
            y[k] = x[k] - eps * z;
            w *= wk;
        }
        match order {
            Order::Value => base.eval(t, &y[..d], &mut buf),
            Order::Jacobian => base.jacobian(t, &y[..d], &mut buf).expect("stencil base is smooth"),
            Order::Hessian => base.hessian(t, &y[..d], &mut buf).expect("stencil base is smooth"),
        }
        for k in 0..m {
            out[k] += w * buf[k];
        }
    }
}
