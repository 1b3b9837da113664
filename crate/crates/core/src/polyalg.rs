//! Dense complex polynomials in one variable.
//!
//! [`CPoly`] stores coefficients in ascending order and is the substrate for
//! potentials, the polynomial factors of elementary eigenfunctions and the
//! Wronskian reductions. Besides ring arithmetic this module provides a
//! simultaneous-iteration root finder, contour-quadrature residues and the
//! coefficient-matching solver for the `C`-constant identity.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// A complex polynomial, `coeffs[k]` multiplying `z^k`.
///
/// Trailing exact zeros are stripped on construction, so the zero polynomial
/// is the empty coefficient vector and `degree()` is `len - 1` otherwise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct CPoly {
    coeffs: Vec<Complex64>,
}

impl From<Vec<Complex64>> for CPoly {
    fn from(coeffs: Vec<Complex64>) -> Self {
        CPoly::new(coeffs)
    }
}

impl From<CPoly> for Vec<Complex64> {
    fn from(p: CPoly) -> Self {
        p.coeffs
    }
}

impl CPoly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        CPoly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        CPoly::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    pub fn zero() -> Self {
        CPoly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        CPoly::constant(Complex64::new(1.0, 0.0))
    }

    pub fn constant(c: Complex64) -> Self {
        CPoly::new(vec![c])
    }

    /// `c * z^k`
    pub fn monomial(k: usize, c: Complex64) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
        coeffs[k] = c;
        CPoly::new(coeffs)
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        roots.iter().fold(CPoly::one(), |acc, &r| {
            acc * CPoly::new(vec![-r, Complex64::new(1.0, 0.0)])
        })
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `z^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs.last().copied().unwrap_or_default()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn has_real_coeffs(&self) -> bool {
        self.coeffs.iter().all(|c| c.im == 0.0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        self.coeffs.iter().rev().fold((zero, zero), |(p, dp), &c| {
            (p * z + c, dp * z + p)
        })
    }

    /// Sum of `|a_k| |z|^k`, the natural rounding scale of `eval` at `z`.
    pub fn eval_scale(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c.norm())
    }

    pub fn derivative(&self) -> CPoly {
        CPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| c * k as f64)
                .collect(),
        )
    }

    /// Antiderivative vanishing at the origin.
    pub fn antiderivative(&self) -> CPoly {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(Complex64::new(0.0, 0.0));
        coeffs.extend(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| c / (k + 1) as f64),
        );
        CPoly::new(coeffs)
    }

    /// `p(-z)`.
    pub fn reflect(&self) -> CPoly {
        CPoly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 0 { c } else { -c })
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> CPoly {
        CPoly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    /// Divide through by the leading coefficient.
    pub fn monic(&self) -> CPoly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(self.leading().inv())
    }

    /// Euclidean division: `self = quot * divisor + rem`, `deg rem < deg divisor`.
    pub fn divrem(&self, divisor: &CPoly) -> Result<(CPoly, CPoly)> {
        let dd = divisor.degree().ok_or(Error::DivisionByZero)?;
        let Some(dn) = self.degree() else {
            return Ok((CPoly::zero(), CPoly::zero()));
        };
        if dn < dd {
            return Ok((CPoly::zero(), self.clone()));
        }
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![Complex64::new(0.0, 0.0); dn - dd + 1];
        for k in (0..=dn - dd).rev() {
            let c = rem[k + dd] / lead;
            quot[k] = c;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= c * d;
            }
        }
        rem.truncate(dd);
        Ok((CPoly::new(quot), CPoly::new(rem)))
    }

    /// All roots with multiplicity, by Aberth–Ehrlich simultaneous iteration.
    ///
    /// Each returned root `r` satisfies
    /// `|p(r)| <= tol * max|a_k| * max(1, |r|)^n`. Output order is deterministic.
    pub fn roots(&self, tol: f64) -> Result<Vec<Complex64>> {
        let n = match self.degree() {
            None | Some(0) => {
                return Err(Error::InvalidParams(
                    "root finding needs a polynomial of degree >= 1".into(),
                ))
            }
            Some(n) => n,
        };
        let p = self.monic();
        if n == 1 {
            return Ok(vec![-p.coeffs[0]]);
        }
        let dp = p.derivative();
        let radius = 1.0
            + p.coeffs[..n]
                .iter()
                .map(|c| c.norm())
                .fold(0.0, f64::max);
        // Offset the starting angle so that symmetric polynomials do not
        // place guesses on symmetry axes.
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(radius, TAU * k as f64 / n as f64 + 0.4))
            .collect();
        let eps = f64::EPSILON;
        const MAX_ITER: usize = 1000;
        let mut done = vec![false; n];
        for _ in 0..MAX_ITER {
            let mut max_rel = 0.0f64;
            for k in 0..n {
                if done[k] {
                    continue;
                }
                let pz = p.eval(z[k]);
                if pz.norm() <= 4.0 * eps * p.eval_scale(z[k]) {
                    done[k] = true;
                    continue;
                }
                let ratio = pz / dp.eval(z[k]);
                let repulsion: Complex64 = (0..n)
                    .filter(|&j| j != k)
                    .map(|j| (z[k] - z[j]).inv())
                    .sum();
                let corr = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if !corr.is_finite() {
                    // Perturb a stuck iterate rather than propagate NaN.
                    let bump = Complex64::new(1e-3, 1e-3) * (1.0 + z[k].norm());
                    z[k] += bump;
                    max_rel = f64::INFINITY;
                    continue;
                }
                z[k] -= corr;
                let rel = corr.norm() / z[k].norm().max(1.0);
                if rel <= eps {
                    done[k] = true;
                }
                max_rel = max_rel.max(rel);
            }
            if done.iter().all(|&d| d) || max_rel <= 0.01 * tol.min(1e-8) {
                return p.check_roots(z, tol);
            }
        }
        p.check_roots(z, tol)
    }

    fn check_roots(&self, mut z: Vec<Complex64>, tol: f64) -> Result<Vec<Complex64>> {
        let mut worst = 0.0f64;
        let n = self.degree().unwrap_or(0) as i32;
        let cmax = self.max_abs_coeff();
        for r in &z {
            // Norm-wise backward error; component-wise breaks down at
            // multiple roots of lacunary polynomials such as z^2.
            let bw = self.eval(*r).norm() / (cmax * r.norm().max(1.0).powi(n));
            worst = worst.max(bw);
        }
        if worst > tol.max(1e-14) {
            return Err(Error::NonConvergence {
                iterations: 1000,
                residual: worst,
            });
        }
        z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        Ok(z)
    }
}

impl Add for &CPoly {
    type Output = CPoly;
    fn add(self, rhs: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        CPoly::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &CPoly {
    type Output = CPoly;
    fn sub(self, rhs: &CPoly) -> CPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        CPoly::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &CPoly {
    type Output = CPoly;
    fn mul(self, rhs: &CPoly) -> CPoly {
        if self.is_zero() || rhs.is_zero() {
            return CPoly::zero();
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        CPoly::new(out)
    }
}

impl Neg for &CPoly {
    type Output = CPoly;
    fn neg(self) -> CPoly {
        CPoly::new(self.coeffs.iter().map(|&c| -c).collect())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for CPoly {
            type Output = CPoly;
            fn $m(self, rhs: CPoly) -> CPoly {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&CPoly> for CPoly {
            type Output = CPoly;
            fn $m(self, rhs: &CPoly) -> CPoly {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for CPoly {
    type Output = CPoly;
    fn neg(self) -> CPoly {
        -&self
    }
}

fn fmt_coeff(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else if c.re == 0.0 {
        format!("{}i", c.im)
    } else {
        format!("({}{:+}i)", c.re, c.im)
    }
}

impl fmt::Display for CPoly {
    /// Highest degree first, e.g. `z^4 - 2*z^2 + 4*z`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (neg, mag) = if c.im == 0.0 && c.re < 0.0 {
                (true, Complex64::new(-c.re, 0.0))
            } else {
                (false, c)
            };
            if first {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            first = false;
            let unit = mag == Complex64::new(1.0, 0.0);
            match k {
                0 => write!(f, "{}", fmt_coeff(mag))?,
                _ => {
                    if !unit {
                        write!(f, "{}*", fmt_coeff(mag))?;
                    }
                    if k == 1 {
                        write!(f, "z")?;
                    } else {
                        write!(f, "z^{k}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

impl FromStr for CPoly {
    type Err = Error;

    /// Parses sums of terms like `3*z^2`, `-z`, `2.5i*z^3`, `z^4-2*z^2+4*z`.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::InvalidParams("empty polynomial".into()));
        }
        let bad = |msg: &str| Error::InvalidParams(format!("cannot parse polynomial '{s}': {msg}"));
        let mut coeffs: Vec<Complex64> = Vec::new();
        let bytes = s.as_bytes();
        let mut pos = 0;
        while pos < bytes.len() {
            let mut sign = 1.0;
            if bytes[pos] == b'+' || bytes[pos] == b'-' {
                if bytes[pos] == b'-' {
                    sign = -1.0;
                }
                pos += 1;
            } else if pos != 0 {
                return Err(bad("expected '+' or '-'"));
            }
            let start = pos;
            while pos < bytes.len()
                && (bytes[pos].is_ascii_digit()
                    || bytes[pos] == b'.'
                    || ((bytes[pos] == b'e' || bytes[pos] == b'E')
                        && pos + 1 < bytes.len()
                        && (bytes[pos + 1].is_ascii_digit()
                            || bytes[pos + 1] == b'-'
                            || bytes[pos + 1] == b'+'))
                    || ((bytes[pos] == b'-' || bytes[pos] == b'+')
                        && pos > start
                        && (bytes[pos - 1] == b'e' || bytes[pos - 1] == b'E')))
            {
                pos += 1;
            }
            let mut coef = if pos > start {
                let v: f64 = s[start..pos].parse().map_err(|_| bad("bad number"))?;
                Complex64::new(v, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            };
            if pos < bytes.len() && bytes[pos] == b'i' {
                coef *= Complex64::i();
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'*' {
                pos += 1;
            }
            let mut power = 0usize;
            if pos < bytes.len() && bytes[pos] == b'z' {
                pos += 1;
                power = 1;
                if pos < bytes.len() && bytes[pos] == b'^' {
                    pos += 1;
                    let pstart = pos;
                    while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                        pos += 1;
                    }
                    power = s[pstart..pos].parse().map_err(|_| bad("bad exponent"))?;
                }
            } else if pos == start {
                return Err(bad("empty term"));
            }
            if coeffs.len() <= power {
                coeffs.resize(power + 1, Complex64::new(0.0, 0.0));
            }
            coeffs[power] += coef * sign;
        }
        Ok(CPoly::new(coeffs))
    }
}

/// `(1/2πi) ∮ f(z) dz` over the circle `|z - center| = radius` by the
/// `n`-point trapezoidal rule.
pub fn contour_integral_circle<F>(f: F, center: Complex64, radius: f64, n: usize) -> Complex64
where
    F: Fn(Complex64) -> Complex64,
{
    let sum: Complex64 = (0..n)
        .map(|k| {
            let w = Complex64::from_polar(radius, TAU * k as f64 / n as f64);
            f(center + w) * w
        })
        .sum();
    sum / n as f64
}

/// Residue of `p^{-2} e^{-2h}` at the simple root `z0` of `p`, where `h` is
/// the antiderivative of `hprime` with `h(0) = 0`.
pub fn residue_order2(
    p: &CPoly,
    hprime: &CPoly,
    z0: Complex64,
    radius: f64,
    quad_n: usize,
) -> Result<Complex64> {
    let dp = p.derivative().eval(z0);
    if dp.norm() <= 1e-10 * p.derivative().eval_scale(z0).max(1.0) {
        return Err(Error::RootNotSimple {
            z: format!("{z0}"),
            derivative: dp.norm(),
        });
    }
    if p.degree().unwrap_or(0) >= 2 {
        let roots = p.roots(1e-12)?;
        let nearest = roots
            .iter()
            .map(|r| (r - z0).norm())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        let other = roots
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != nearest)
            .map(|(_, r)| (r - z0).norm())
            .fold(f64::INFINITY, f64::min);
        if other <= 2.0 * radius {
            return Err(Error::RadiusTooLarge {
                radius,
                distance: other,
            });
        }
    }
    let h = hprime.antiderivative();
    Ok(contour_integral_circle(
        |z| {
            let pz = p.eval(z);
            (-2.0 * h.eval(z)).exp() / (pz * pz)
        },
        z0,
        radius,
        quad_n,
    ))
}

/// Default contour radius for [`residue_order2`] at `z0` given all roots.
pub fn default_residue_radius(roots: &[Complex64], z0: Complex64) -> f64 {
    let nearest = roots
        .iter()
        .map(|r| (r - z0).norm())
        .filter(|&d| d > 1e-12)
        .fold(f64::INFINITY, f64::min);
    (0.4 * nearest).min(0.5)
}

/// Solution of the polynomial form of the `C`-constant identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CIdentity {
    pub q: CPoly,
    pub c: Complex64,
    /// Max coefficient residual relative to the largest coefficient of
    /// `p^2(-z) p^2(z)`.
    pub residual: f64,
}

/// Solve `p²(−z)p²(z) − C = q′p − qp′ − 2h′qp` for the polynomial `q` and the
/// constant `C` by matching coefficients.
///
/// The system is overdetermined; it is solved in the least-squares sense with
/// column scaling, and [`Error::NoSolution`] is returned when the relative
/// residual exceeds `1e-9`.
pub fn solve_c_identity(p: &CPoly, hprime: &CPoly) -> Result<CIdentity> {
    let n = p
        .degree()
        .ok_or_else(|| Error::InvalidParams("p must be nonzero".into()))?;
    let lhs = {
        let p2 = p * p;
        &p2.reflect() * &p2
    };
    let dh = hprime.degree().unwrap_or(0);
    let rows = 4 * n + 1;
    let nq = if n == 0 { 0 } else { (3 * n + 1).saturating_sub(dh) };
    let cols = nq + 1;

    let dp = p.derivative();
    let mut a = DMatrix::<Complex64>::zeros(rows.max(lhs.coeffs().len()), cols);
    for j in 0..nq {
        let zj = CPoly::monomial(j, Complex64::new(1.0, 0.0));
        let col = &(&(&zj.derivative() * p) - &(&zj * &dp))
            - &(&(hprime * &zj) * p).scale(Complex64::new(2.0, 0.0));
        for (k, &c) in col.coeffs().iter().enumerate() {
            if k >= a.nrows() {
                return Err(Error::NoSolution {
                    residual: f64::INFINITY,
                });
            }
            a[(k, j)] = c;
        }
    }
    a[(0, nq)] = Complex64::new(1.0, 0.0);
    let b = DVector::from_iterator(
        a.nrows(),
        (0..a.nrows()).map(|k| lhs.coeff(k)),
    );

    let scales: Vec<f64> = (0..cols)
        .map(|j| a.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let x = svd
        .solve(&b, 1e-13)
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let x = DVector::from_iterator(cols, (0..cols).map(|j| x[j] / scales[j]));
    let resid_vec = &a * &x - &b;
    let bmax = b.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let residual = resid_vec.iter().map(|c| c.norm()).fold(0.0, f64::max) / bmax;
    if residual > 1e-9 {
        return Err(Error::NoSolution { residual });
    }
    Ok(CIdentity {
        q: CPoly::new(x.iter().take(nq).copied().collect()),
        c: x[nq],
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn evaluation() {
        let p = CPoly::from_real(&[-1.0, 0.0, 1.0]);
        assert_eq!(p.eval(c(2.0, 0.0)), c(3.0, 0.0));
        assert_eq!(CPoly::zero().eval(c(7.0, 1.0)), c(0.0, 0.0));
        // z^2 - b at z = i, b = 1
        assert_eq!(p.eval(c(0.0, 1.0)), c(-2.0, 0.0));
    }

    #[test]
    fn zero_is_canonical() {
        assert!(CPoly::from_real(&[0.0, 0.0]).is_zero());
        assert_eq!(CPoly::from_real(&[0.0]).degree(), None);
        assert_eq!(CPoly::from_real(&[1.0, 2.0, 0.0]).degree(), Some(1));
    }

    #[test]
    fn ring_operations() {
        let p = CPoly::from_real(&[0.0, -1.0, 0.0, 1.0]);
        assert_eq!(p.reflect(), CPoly::from_real(&[0.0, 1.0, 0.0, -1.0]));
        let (q, r) = CPoly::from_real(&[-1.0, 0.0, 1.0])
            .divrem(&CPoly::from_real(&[-1.0, 1.0]))
            .unwrap();
        assert_eq!(q, CPoly::from_real(&[1.0, 1.0]));
        assert!(r.is_zero());
        let cube = CPoly::from_real(&[0.0, 0.0, 0.0, 1.0 / 3.0]);
        assert_eq!(cube.derivative(), CPoly::from_real(&[0.0, 0.0, 1.0]));
        assert_eq!(
            CPoly::from_real(&[0.0, 0.0, 1.0]).antiderivative(),
            CPoly::from_real(&[0.0, 0.0, 0.0, 1.0 / 3.0])
        );
    }

    #[test]
    fn divide_by_zero_polynomial() {
        let p = CPoly::from_real(&[1.0, 1.0]);
        assert_eq!(p.divrem(&CPoly::zero()), Err(Error::DivisionByZero));
    }

    #[test]
    fn simple_roots() {
        let r = CPoly::from_real(&[-1.0, 0.0, 1.0]).roots(1e-12).unwrap();
        assert_abs_diff_eq!(r[0].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1].re, 1.0, epsilon = 1e-12);
        assert!(r.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn double_root() {
        let r = CPoly::from_real(&[4.0, -4.0, 1.0]).roots(1e-12).unwrap();
        for z in r {
            assert!((z - c(2.0, 0.0)).norm() < 1e-6, "{z}");
        }
    }

    #[test]
    fn qes_factor_root() {
        // n = 1, b = 1: Bethe gives z1^2 = b; p = z - 1 is one of the factors.
        let r = CPoly::from_real(&[-1.0, 1.0]).roots(1e-12).unwrap();
        assert_eq!(r, vec![c(1.0, 0.0)]);
    }

    #[test]
    fn roots_of_constant_rejected() {
        assert!(CPoly::one().roots(1e-12).is_err());
    }

    #[test]
    fn residues() {
        let z = CPoly::from_real(&[0.0, 1.0]);
        let r0 = residue_order2(&z, &CPoly::zero(), c(0.0, 0.0), 0.5, 64).unwrap();
        assert!(r0.norm() < 1e-14);
        // Laurent: e^{-2h} = 1 - 2h'(0) z + ..., residue = 2b.
        let hp = CPoly::from_real(&[-1.0, 0.0, 1.0]);
        let r1 = residue_order2(&z, &hp, c(0.0, 0.0), 0.5, 64).unwrap();
        assert_abs_diff_eq!(r1.re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r1.im, 0.0, epsilon = 1e-12);
        // QES point n = 1, b = 1.
        let p = CPoly::from_real(&[-1.0, 1.0]);
        let r2 = residue_order2(&p, &hp, c(1.0, 0.0), 0.5, 64).unwrap();
        assert!(r2.norm() < 1e-10, "{r2}");
    }

    #[test]
    fn residue_errors() {
        let p = CPoly::from_real(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            residue_order2(&p, &CPoly::zero(), c(0.0, 0.0), 0.1, 64),
            Err(Error::RootNotSimple { .. })
        ));
        let p = CPoly::from_real(&[-1.0, 0.0, 1.0]);
        assert!(matches!(
            residue_order2(&p, &CPoly::zero(), c(1.0, 0.0), 1.5, 64),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn residue_is_radius_independent() {
        let p = CPoly::from_roots(&[c(0.3, 0.2), c(-1.0, 0.5), c(1.2, -0.7)]);
        let hp = CPoly::from_real(&[-0.7, 0.0, 1.0]);
        for z0 in [c(0.3, 0.2), c(-1.0, 0.5)] {
            let a = residue_order2(&p, &hp, z0, 0.15, 64).unwrap();
            let b = residue_order2(&p, &hp, z0, 0.3, 64).unwrap();
            assert!((a - b).norm() < 1e-9 * (1.0 + a.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn residue_sum_matches_enclosing_contour() {
        let roots = [c(0.3, 0.2), c(-0.4, 0.5), c(0.1, -0.6)];
        let p = CPoly::from_roots(&roots);
        let hp = CPoly::from_real(&[-0.5, 0.0, 1.0]);
        let sum: Complex64 = roots
            .iter()
            .map(|&z0| residue_order2(&p, &hp, z0, 0.2, 128).unwrap())
            .sum();
        let h = hp.antiderivative();
        let big = contour_integral_circle(
            |z| {
                let pz = p.eval(z);
                (-2.0 * h.eval(z)).exp() / (pz * pz)
            },
            c(0.0, 0.0),
            1.5,
            512,
        );
        assert!((sum - big).norm() < 1e-8 * (1.0 + big.norm()), "{sum} vs {big}");
    }

    #[test]
    fn c_identity_trivial() {
        let hp = CPoly::from_real(&[-2.0, 0.0, 1.0]);
        let sol = solve_c_identity(&CPoly::one(), &hp).unwrap();
        assert!(sol.q.is_zero());
        assert_abs_diff_eq!(sol.c.re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn c_identity_first_order() {
        let hp = CPoly::from_real(&[-1.0, 0.0, 1.0]);
        let sol = solve_c_identity(&CPoly::from_real(&[-1.0, 1.0]), &hp).unwrap();
        // Hand elimination: q = -(1 + z)/2, C = -1.
        assert_abs_diff_eq!(sol.c.re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.q.coeff(0).re, -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.q.coeff(1).re, -0.5, epsilon = 1e-12);
        let sol = solve_c_identity(&CPoly::from_real(&[1.0, 1.0]), &hp).unwrap();
        assert_abs_diff_eq!(sol.c.re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn c_identity_off_locus() {
        let hp = CPoly::from_real(&[-1.0, 0.0, 1.0]);
        let err = solve_c_identity(&CPoly::from_real(&[0.0, 1.0]), &hp).unwrap_err();
        assert!(matches!(err, Error::NoSolution { residual } if residual > 1e-3));
    }

    #[test]
    fn parse_and_display() {
        let p: CPoly = "z^4-2*z^2+4*z".parse().unwrap();
        assert_eq!(p, CPoly::from_real(&[0.0, 4.0, -2.0, 0.0, 1.0]));
        assert_eq!(p.to_string(), "z^4 - 2*z^2 + 4*z");
        let q: CPoly = "-z^4 + 1.5e1*z^2 - 3".parse().unwrap();
        assert_eq!(q, CPoly::from_real(&[-3.0, 0.0, 15.0, 0.0, -1.0]));
        let r: CPoly = "z^3 + 2i*z".parse().unwrap();
        assert_eq!(r.coeff(1), c(0.0, 2.0));
        assert!("z^".parse::<CPoly>().is_err());
        assert!("".parse::<CPoly>().is_err());
    }
}
