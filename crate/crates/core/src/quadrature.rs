//! Gauss–Legendre rules and the substitutions used to integrate functions
//! with algebraic endpoint singularities.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let n = NonZeroUsize::new(n).expect("rule needs at least one node");
        let gl = GaussLegendre::new(n);
        let (nodes, weights) = gl.as_node_weight_pairs().iter().copied().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Cached rule with `n` nodes for the sizes used throughout the crate.
pub fn rule(n: usize) -> &'static Rule {
    static R4: OnceLock<Rule> = OnceLock::new();
    static R8: OnceLock<Rule> = OnceLock::new();
    static R12: OnceLock<Rule> = OnceLock::new();
    static R16: OnceLock<Rule> = OnceLock::new();
    static R32: OnceLock<Rule> = OnceLock::new();
    static R64: OnceLock<Rule> = OnceLock::new();
    let cell = match n {
        4 => &R4,
        8 => &R8,
        12 => &R12,
        16 => &R16,
        32 => &R32,
        64 => &R64,
        _ => panic!("no cached Gauss-Legendre rule with {n} nodes"),
    };
    cell.get_or_init(|| Rule::new(n))
}

/// Integral over `[a, b]` of a function behaving like `(x - a)^left` near `a`
/// and `(b - x)^right` near `b` (exponents `> -1`; `None` means regular).
///
/// Each singular half is mapped by `x - a = w^q`, `q = 1 / (1 + exponent)`,
/// which turns the leading singular factor into a constant.
pub fn integrate_singular<F: FnMut(f64) -> f64>(
    rule: &Rule,
    a: f64,
    b: f64,
    left: Option<f64>,
    right: Option<f64>,
    mut f: F,
) -> f64 {
    match (left, right) {
        (None, None) => rule.integrate(a, b, f),
        (Some(l), None) => left_singular(rule, a, b, l, &mut f),
        (None, Some(r)) => right_singular(rule, a, b, r, &mut f),
        (Some(l), Some(r)) => {
            let m = 0.5 * (a + b);
            left_singular(rule, a, m, l, &mut f) + right_singular(rule, m, b, r, &mut f)
        }
    }
}

fn left_singular<F: FnMut(f64) -> f64>(rule: &Rule, a: f64, b: f64, exponent: f64, f: &mut F) -> f64 {
    debug_assert!(exponent > -1.0);
    let q = 1.0 / (1.0 + exponent);
    let wmax = (b - a).powf(1.0 / q);
    rule.integrate(0.0, wmax, |w| {
        if w <= 0.0 {
            return 0.0;
        }
        q * w.powf(q - 1.0) * f(a + w.powf(q))
    })
}

fn right_singular<F: FnMut(f64) -> f64>(rule: &Rule, a: f64, b: f64, exponent: f64, f: &mut F) -> f64 {
    debug_assert!(exponent > -1.0);
    let q = 1.0 / (1.0 + exponent);
    let wmax = (b - a).powf(1.0 / q);
    rule.integrate(0.0, wmax, |w| {
        if w <= 0.0 {
            return 0.0;
        }
        q * w.powf(q - 1.0) * f(b - w.powf(q))
    })
}

/// `int_a^b (x - a)^left (b - x)^right g(x) dx` for regular `g` (exponents
/// `> -1`; `None` means no factor).
///
/// Unlike [`integrate_singular`] the power factors are never evaluated near
/// their singular endpoint: after `x - a = w^q` the left factor and the
/// Jacobian combine into the constant `q`, so rounding of `a + w^q` cannot
/// produce `0^exponent`.
pub fn integrate_power_weighted<F: FnMut(f64) -> f64>(
    rule: &Rule,
    a: f64,
    b: f64,
    left: Option<f64>,
    right: Option<f64>,
    mut g: F,
) -> f64 {
    let (l, r) = (left.unwrap_or(0.0), right.unwrap_or(0.0));
    debug_assert!(l > -1.0 && r > -1.0);
    let m = 0.5 * (a + b);
    let ql = 1.0 / (1.0 + l);
    let left_half = rule.integrate(0.0, (m - a).powf(1.0 + l), |w| {
        let x = a + w.powf(ql);
        ql * (b - x).powf(r) * g(x)
    });
    let qr = 1.0 / (1.0 + r);
    let right_half = rule.integrate(0.0, (b - m).powf(1.0 + r), |w| {
        let x = b - w.powf(qr);
        qr * (x - a).powf(l) * g(x)
    });
    left_half + right_half
}

/// Composite rule on `[a, b]` with panels graded geometrically towards `a`:
/// breakpoints `a + (b - a) * ratio^k`, `k = 0..levels`, plus `[a, a + (b-a) ratio^levels]`.
pub fn integrate_graded<F: FnMut(f64) -> f64>(
    rule: &Rule,
    a: f64,
    b: f64,
    ratio: f64,
    levels: usize,
    mut f: F,
) -> f64 {
    let len = b - a;
    let mut acc = 0.0;
    let mut hi = len;
    for _ in 0..levels {
        let lo = hi * ratio;
        acc += rule.integrate(a + lo, a + hi, &mut f);
        hi = lo;
    }
    acc + rule.integrate(a, a + hi, &mut f)
}
