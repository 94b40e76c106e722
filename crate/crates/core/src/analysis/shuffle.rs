//! Exact iterated integrals of polynomials over ordered simplices and the
//! shuffle-product identity.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

const MAX_TOTAL: usize = 12;
const MAX_CHECK: usize = 8;
const MAX_DEGREE: usize = 8;

/// Shuffles of `m` and `n` ordered blocks: permutations `sigma` of
/// `0..m+n` with `sigma[0] < .. < sigma[m-1]` and `sigma[m] < .. < sigma[m+n-1]`.
pub fn shuffle_permutations(m: usize, n: usize) -> Result<Vec<Vec<usize>>> {
    if m + n > MAX_TOTAL {
        return Err(Error::SizeGuard(format!("m + n = {} exceeds {MAX_TOTAL}", m + n)));
    }
    let total = m + n;
    let mut out = Vec::new();
    let mut chosen = Vec::with_capacity(m);
    choose(0, total, m, &mut chosen, &mut |first| {
        let mut sigma = first.to_vec();
        sigma.extend((0..total).filter(|i| !first.contains(i)));
        out.push(sigma);
    });
    Ok(out)
}

fn choose(start: usize, total: usize, k: usize, acc: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if acc.len() == k {
        emit(acc);
        return;
    }
    for i in start..total {
        if total - i < k - acc.len() {
            break;
        }
        acc.push(i);
        choose(i + 1, total, k, acc, emit);
        acc.pop();
    }
}

/// Polynomial `sum_k c_k s^k` with floating-point coefficients, converted
/// exactly to rationals for integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn exact(&self) -> Result<RatPoly> {
        let c = self.coeffs.iter().map(|c| rat(*c)).collect::<Result<Vec<_>>>()?;
        Ok(RatPoly(c))
    }
}

fn rat(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::Domain(format!("{x} is not finite")))
}

#[derive(Debug, Clone)]
struct RatPoly(Vec<BigRational>);

impl RatPoly {
    fn mul(&self, other: &RatPoly) -> RatPoly {
        if self.0.is_empty() || other.0.is_empty() {
            return RatPoly(Vec::new());
        }
        let mut c = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        RatPoly(c)
    }

    fn eval(&self, x: &BigRational) -> BigRational {
        self.0.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
    }

    /// `s -> int_theta^s p(u) du`.
    fn integral_from(&self, theta: &BigRational) -> RatPoly {
        let mut c = vec![BigRational::zero()];
        for (k, a) in self.0.iter().enumerate() {
            c.push(a / BigRational::from_integer(BigInt::from(k + 1)));
        }
        let mut p = RatPoly(c);
        let at = p.eval(theta);
        p.0[0] -= at;
        p
    }
}

fn check_degrees(fs: &[Polynomial]) -> Result<()> {
    if let Some(f) = fs.iter().find(|f| f.degree() > MAX_DEGREE) {
        return Err(Error::SizeGuard(format!("degree {} exceeds {MAX_DEGREE}", f.degree())));
    }
    Ok(())
}

/// Exact `int_{theta < s_m < .. < s_1 < t} f_1(s_1) .. f_m(s_m) ds`.
fn simplex_exact(fs: &[Polynomial], theta: &BigRational, t: &BigRational) -> Result<BigRational> {
    let mut g = RatPoly(vec![BigRational::one()]);
    for f in fs.iter().rev() {
        g = f.exact()?.mul(&g).integral_from(theta);
    }
    Ok(g.eval(t))
}

/// Iterated integral over `{theta < s_m < .. < s_1 < t}` of
/// `f_1(s_1) .. f_m(s_m)`, computed exactly and rounded once.
pub fn simplex_integral(fs: &[Polynomial], theta: f64, t: f64) -> Result<f64> {
    check_degrees(fs)?;
    let v = simplex_exact(fs, &rat(theta)?, &rat(t)?)?;
    Ok(v.to_f64().unwrap_or(f64::NAN))
}

/// Outcome of [`shuffle_identity_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuffleCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
    pub exact_match: bool,
}

/// Product of two simplex integrals against the sum over shuffles.
///
/// For a shuffle `sigma`, the `j`-th function of the concatenated list
/// `(f_1..f_m, g_1..g_n)` sits at simplex position `sigma(j)`.
pub fn shuffle_identity_check(fs: &[Polynomial], gs: &[Polynomial], theta: f64, t: f64) -> Result<ShuffleCheck> {
    let (m, n) = (fs.len(), gs.len());
    if m + n > MAX_CHECK {
        return Err(Error::SizeGuard(format!("m + n = {} exceeds {MAX_CHECK}", m + n)));
    }
    check_degrees(fs)?;
    check_degrees(gs)?;
    let (th, tt) = (rat(theta)?, rat(t)?);
    let lhs = simplex_exact(fs, &th, &tt)? * simplex_exact(gs, &th, &tt)?;
    let all: Vec<&Polynomial> = fs.iter().chain(gs).collect();
    let mut rhs = BigRational::zero();
    let mut placed: Vec<Polynomial> = vec![Polynomial::constant(0.0); m + n];
    for sigma in shuffle_permutations(m, n)? {
        for (j, pos) in sigma.iter().enumerate() {
            placed[*pos] = all[j].clone();
        }
        rhs += simplex_exact(&placed, &th, &tt)?;
    }
    let (l, r) = (lhs.to_f64().unwrap_or(f64::NAN), rhs.to_f64().unwrap_or(f64::NAN));
    Ok(ShuffleCheck { lhs: l, rhs: r, abs_err: (l - r).abs(), exact_match: lhs == rhs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn shuffle_counts() {
        assert_eq!(shuffle_permutations(1, 1).unwrap().len(), 2);
        assert_eq!(shuffle_permutations(2, 2).unwrap().len(), 6);
        assert_eq!(shuffle_permutations(3, 2).unwrap().len(), 10);
        for m in 0..=6 {
            for n in 0..=6 {
                let s = shuffle_permutations(m, n).unwrap();
                assert_eq!(s.len(), binom(m + n, m));
                for sigma in &s {
                    assert!(sigma[..m].windows(2).all(|w| w[0] < w[1]));
                    assert!(sigma[m..].windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
        assert!(shuffle_permutations(7, 6).is_err());
    }

    #[test]
    fn simplex_volumes_and_hand_values() {
        let one = Polynomial::constant(1.0);
        let s = Polynomial::new(vec![0.0, 1.0]);
        assert_eq!(simplex_integral(&[one.clone(), one.clone()], 0.0, 1.0).unwrap(), 0.5);
        assert_eq!(simplex_integral(&[one.clone(), one.clone(), one.clone()], 0.0, 1.0).unwrap(), 1.0 / 6.0);
        assert_eq!(simplex_integral(&[s.clone(), one.clone()], 0.0, 1.0).unwrap(), 1.0 / 3.0);
        assert!(simplex_integral(&[Polynomial::new(vec![1.0; 10])], 0.0, 1.0).is_err());
    }

    #[test]
    fn shuffle_hand_examples() {
        let one = Polynomial::constant(1.0);
        let s = Polynomial::new(vec![0.0, 1.0]);
        let c = shuffle_identity_check(&[one.clone()], &[one.clone()], 0.0, 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (1.0, 1.0));
        let c = shuffle_identity_check(&[s], &[one], 0.0, 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.5, 0.5));
        assert!(c.exact_match);
    }

    #[test]
    fn literal_index_placement_is_not_an_identity() {
        // placing f_{sigma(j)} at position j instead of f_j at sigma(j)
        let fs = [Polynomial::new(vec![0.0, 1.0]), Polynomial::constant(1.0)];
        let gs = [Polynomial::new(vec![0.0, 0.0, 1.0]), Polynomial::constant(2.0)];
        let all: Vec<&Polynomial> = fs.iter().chain(&gs).collect();
        let lhs = simplex_integral(&fs, 0.0, 1.0).unwrap() * simplex_integral(&gs, 0.0, 1.0).unwrap();
        let mut literal = 0.0;
        for sigma in shuffle_permutations(2, 2).unwrap() {
            let placed: Vec<Polynomial> = sigma.iter().map(|&k| all[k].clone()).collect();
            literal += simplex_integral(&placed, 0.0, 1.0).unwrap();
        }
        assert!((literal - lhs).abs() > 1e-6);
        let c = shuffle_identity_check(&fs, &gs, 0.0, 1.0).unwrap();
        assert!(c.exact_match);
    }
}
