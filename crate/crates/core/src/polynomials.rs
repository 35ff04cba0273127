//! Dense univariate polynomials over [`Scalar`] and the lattice operators
//! acting on them.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar_core::{q_bracket, Scalar};

/// Polynomial with coefficients stored lowest degree first.
///
/// The representation is canonical: trailing coefficients whose value is zero
/// are dropped, so the zero polynomial has no coefficients at all.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<Scalar>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::constant(Scalar::one())
    }

    pub fn constant(c: Scalar) -> Self {
        Poly::from_coeffs(vec![c])
    }

    /// The identity polynomial `x`.
    pub fn x() -> Self {
        Poly::monomial(1)
    }

    pub fn monomial(k: usize) -> Self {
        let mut c = vec![Scalar::zero(); k + 1];
        c[k] = Scalar::one();
        Poly { coeffs: c }
    }

    pub fn from_coeffs(coeffs: Vec<Scalar>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn from_ints(c: &[i64]) -> Self {
        Poly::from_coeffs(c.iter().map(|&v| Scalar::from_int(v)).collect())
    }

    /// `x - r`.
    pub fn linear_root(r: &Scalar) -> Self {
        Poly::from_coeffs(vec![-r, Scalar::one()])
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.value_is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, k: usize) -> Scalar {
        self.coeffs.get(k).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn leading(&self) -> Option<&Scalar> {
        self.coeffs.last()
    }

    /// Leading coefficient is 1, exactly on the rational backend and within
    /// `tol` on the float backend.
    pub fn is_monic(&self, tol: f64) -> bool {
        match self.leading() {
            None => false,
            Some(c) if c.is_exact() => *c == Scalar::one(),
            Some(c) => (c - &Scalar::one()).is_zero_within_tol(tol),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.coeffs.iter().all(Scalar::is_exact)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: &Scalar) -> Scalar {
        let mut acc = Scalar::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn scale(&self, s: &Scalar) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `x · p(x)`.
    pub fn mul_x(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut c = Vec::with_capacity(self.coeffs.len() + 1);
        c.push(Scalar::zero());
        c.extend(self.coeffs.iter().cloned());
        Poly { coeffs: c }
    }

    /// `p(x + h)`.
    pub fn shift(&self, h: &Scalar) -> Poly {
        let lin = Poly::from_coeffs(vec![h.clone(), Scalar::one()]);
        let mut acc = Poly::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * &lin) + &Poly::constant(c.clone());
        }
        acc
    }

    /// `p(s x)`.
    pub fn dilate(&self, s: &Scalar) -> Poly {
        let mut pw = Scalar::one();
        let mut out = Vec::with_capacity(self.coeffs.len());
        for c in &self.coeffs {
            out.push(c * &pw);
            pw = &pw * s;
        }
        Poly::from_coeffs(out)
    }

    pub fn to_float(&self, prec: usize) -> Poly {
        Poly::from_coeffs(self.coeffs.iter().map(|c| c.to_float(prec)).collect())
    }

    /// Absolute values of the coefficients as `f64`, used by tail bounds.
    pub fn abs_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.abs_f64() + c.err_bound()).collect()
    }

    /// Largest coefficient error bound.
    pub fn max_err(&self) -> f64 {
        self.coeffs.iter().map(Scalar::err_bound).fold(0.0, f64::max)
    }

    /// Largest coefficient magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &Poly) -> f64 {
        (self - other).coeffs.iter().map(Scalar::abs_f64).fold(0.0, f64::max)
    }

    /// Derivative, used only for the `q → 1` consistency checks.
    pub fn derivative(&self) -> Poly {
        Poly::from_coeffs(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * &Scalar::from_int(k as i64))
                .collect(),
        )
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            if c.value_is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{c}")?,
                1 => write!(f, "({c})x")?,
                _ => write!(f, "({c})x^{k}")?,
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::from_coeffs((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl<'a> Sub<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::from_coeffs((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl<'a> Mul<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Scalar::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_exact_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] = &out[i + j] + &(a * b);
            }
        }
        Poly::from_coeffs(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly { coeffs: self.coeffs.iter().map(|c| -c).collect() }
    }
}

macro_rules! owned_poly_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Poly> for Poly {
            type Output = Poly;
            fn $m(self, rhs: Poly) -> Poly {
                (&self).$m(&rhs)
            }
        }
    };
}

owned_poly_binop!(Add, add);
owned_poly_binop!(Sub, sub);
owned_poly_binop!(Mul, mul);

/// The lattice a family lives on.
///
/// The exponential lattice caches `q^{1/2}` because the q-operator and the
/// q-Pearson pairs carry half-integer powers of `q`.
#[derive(Clone, Debug, PartialEq)]
pub enum Lattice {
    Linear,
    Exponential { q: Scalar, sqrt_q: Scalar },
}

impl Lattice {
    pub fn exponential(q: Scalar, prec: usize) -> Result<Lattice> {
        check_q(&q)?;
        let sqrt_q = q.sqrt(prec)?;
        Ok(Lattice::Exponential { q, sqrt_q })
    }

    pub fn q(&self) -> Option<&Scalar> {
        match self {
            Lattice::Linear => None,
            Lattice::Exponential { q, .. } => Some(q),
        }
    }
}

fn check_q(q: &Scalar) -> Result<()> {
    let ok = match q.as_rational() {
        Some(r) => *r > dashu_ratio::RBig::ZERO && *r < dashu_ratio::RBig::ONE,
        None => q.to_f64() > 0.0 && q.to_f64() < 1.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain("q must lie in (0,1)"))
    }
}

/// Difference and shift operators on the linear and exponential lattices.
#[derive(Clone, Debug, PartialEq)]
pub enum LatticeOp {
    /// `p(x+1) − p(x)`
    Delta,
    /// `p(x) − p(x−1)`
    Nabla,
    /// `p(x+1)`
    ShiftT,
    /// `p(x−1)`
    ShiftTinv,
    /// `p(qx)`
    ShiftTq(Scalar),
    /// `(p(x) − p(qx)) / ((1−q)x)`
    Dq(Scalar),
    /// `(p(x) − p(x/q)) / ((1−1/q)x)`
    DqInv(Scalar),
}

/// Apply a lattice operator symbolically on the coefficient vector.
pub fn apply_lattice_operator(op: &LatticeOp, p: &Poly) -> Result<Poly> {
    let one = Scalar::one();
    Ok(match op {
        LatticeOp::Delta => &p.shift(&one) - p,
        LatticeOp::Nabla => p - &p.shift(&-&one),
        LatticeOp::ShiftT => p.shift(&one),
        LatticeOp::ShiftTinv => p.shift(&-&one),
        LatticeOp::ShiftTq(q) => {
            check_q(q)?;
            p.dilate(q)
        }
        LatticeOp::Dq(q) => {
            check_q(q)?;
            q_derivative(p, q)?
        }
        LatticeOp::DqInv(q) => {
            check_q(q)?;
            q_derivative(p, &q.recip())?
        }
    })
}

/// `D_b p` with coefficient `k` mapped to `c_k [k]_b` at degree `k − 1`.
fn q_derivative(p: &Poly, b: &Scalar) -> Result<Poly> {
    let mut out = Vec::with_capacity(p.coeffs().len());
    for (k, c) in p.coeffs().iter().enumerate().skip(1) {
        out.push(c * &q_bracket(k as i64, b)?);
    }
    Ok(Poly::from_coeffs(out))
}

/// The operator `𝒜`: `g T + f (Δ + ∇)` on the linear lattice and
/// `q^{-1/2} g T_q + q^{-1} f D_{1/q} + f D_q` on the exponential lattice.
pub fn apply_a(f: &Poly, g: &Poly, lattice: &Lattice, p: &Poly) -> Result<Poly> {
    if f.degree().unwrap_or(0) > 2 || g.degree().unwrap_or(0) > 1 {
        return Err(Error::domain("Pearson pair is not classical (deg f ≤ 2, deg g ≤ 1)"));
    }
    match lattice {
        Lattice::Linear => {
            let t = apply_lattice_operator(&LatticeOp::ShiftT, p)?;
            let d = apply_lattice_operator(&LatticeOp::Delta, p)?;
            let n = apply_lattice_operator(&LatticeOp::Nabla, p)?;
            Ok(&(g * &t) + &(f * &(&d + &n)))
        }
        Lattice::Exponential { q, sqrt_q } => {
            let tq = apply_lattice_operator(&LatticeOp::ShiftTq(q.clone()), p)?;
            let dq = apply_lattice_operator(&LatticeOp::Dq(q.clone()), p)?;
            let dqi = apply_lattice_operator(&LatticeOp::DqInv(q.clone()), p)?;
            let first = (g * &tq).scale(&sqrt_q.recip());
            let second = (f * &dqi).scale(&q.recip());
            let third = f * &dq;
            Ok(&(&first + &second) + &third)
        }
    }
}

/// Coefficients of `p` in a monic basis `basis[k]` of degree `k`, by
/// repeated leading-term elimination.
pub fn expand_in_basis(p: &Poly, basis: &[Poly]) -> Result<Vec<Scalar>> {
    let Some(d) = p.degree() else {
        return Ok(Vec::new());
    };
    if basis.len() <= d {
        return Err(Error::Coverage(format!("basis covers degree {} but polynomial has degree {d}", basis.len() as i64 - 1)));
    }
    let mut rest = p.clone();
    let mut out = vec![Scalar::zero(); d + 1];
    for k in (0..=d).rev() {
        let c = rest.coeff(k);
        if c.is_exact_zero() {
            continue;
        }
        rest = &rest - &basis[k].scale(&c);
        // drop the eliminated coefficient so rounding residue cannot linger
        let mut cs = rest.coeffs.clone();
        cs.truncate(k);
        rest = Poly::from_coeffs(cs);
        out[k] = c;
    }
    Ok(out)
}

/// `Σ_k c_k basis[k]`.
pub fn combine(coeffs: &[Scalar], basis: &[Poly]) -> Poly {
    coeffs
        .iter()
        .zip(basis)
        .fold(Poly::zero(), |acc, (c, b)| &acc + &b.scale(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Scalar {
        Scalar::ratio(n, d)
    }

    #[test]
    fn canonical_form_drops_trailing_zeros() {
        let p = Poly::from_ints(&[1, 2, 0, 0]);
        assert_eq!(p.degree(), Some(1));
        assert!(Poly::from_ints(&[0, 0]).is_zero());
        assert_eq!(Poly::zero().degree(), None);
    }

    #[test]
    fn evaluation() {
        assert_eq!(Poly::from_ints(&[-1, 0, 1]).eval(&Scalar::one()), Scalar::zero());
        assert_eq!(Poly::one().eval(&r(7, 3)), Scalar::one());
        assert_eq!(Poly::from_ints(&[0, 2, 0, 1]).eval(&r(1, 2)), r(9, 8));
    }

    #[test]
    fn lattice_operators() {
        let x2 = Poly::monomial(2);
        assert_eq!(apply_lattice_operator(&LatticeOp::Delta, &x2).unwrap(), Poly::from_ints(&[1, 2]));
        assert_eq!(apply_lattice_operator(&LatticeOp::Nabla, &Poly::x()).unwrap(), Poly::one());
        let q = r(1, 3);
        let dq = apply_lattice_operator(&LatticeOp::Dq(q.clone()), &x2).unwrap();
        assert_eq!(dq, Poly::from_coeffs(vec![Scalar::zero(), &Scalar::one() + &q]));
        let x3 = Poly::monomial(3);
        assert_eq!(apply_lattice_operator(&LatticeOp::ShiftT, &x3).unwrap().eval(&Scalar::one()), Scalar::from_int(8));
        assert_eq!(apply_lattice_operator(&LatticeOp::ShiftTinv, &x3).unwrap().eval(&Scalar::one()), Scalar::zero());
        assert_eq!(apply_lattice_operator(&LatticeOp::ShiftTq(q.clone()), &x3).unwrap().coeff(3), r(1, 27));
        // D_{1/q} x² = (1 + 1/q) x
        let dqi = apply_lattice_operator(&LatticeOp::DqInv(q.clone()), &x2).unwrap();
        assert_eq!(dqi.coeff(1), Scalar::from_int(4));
        assert!(apply_lattice_operator(&LatticeOp::Dq(Scalar::from_int(2)), &x2).is_err());
    }

    #[test]
    fn q_derivative_leading_coefficient_is_bracket() {
        let q = r(2, 5);
        let p = Poly::from_ints(&[3, -1, 4, 1, 5]);
        let d = apply_lattice_operator(&LatticeOp::Dq(q.clone()), &p).unwrap();
        assert_eq!(d.degree(), Some(3));
        assert_eq!(d.leading().unwrap(), &(&q_bracket(4, &q).unwrap() * &Scalar::from_int(5)));
    }

    #[test]
    fn operator_a_on_charlier_and_meixner_pairs() {
        let f = Poly::x();
        let g = Poly::from_ints(&[1, -1]);
        assert_eq!(apply_a(&f, &g, &Lattice::Linear, &Poly::one()).unwrap(), Poly::from_ints(&[1, -1]));
        assert!(apply_a(&f, &g, &Lattice::Linear, &Poly::zero()).unwrap().is_zero());
        // Meixner a = 1/2, β = 1: g = (a−1)x + aβ
        let g = Poly::from_coeffs(vec![r(1, 2), r(-1, 2)]);
        assert_eq!(
            apply_a(&f, &g, &Lattice::Linear, &Poly::one()).unwrap(),
            Poly::from_coeffs(vec![r(1, 2), r(-1, 2)])
        );
        let cubic_f = Poly::monomial(3);
        assert!(apply_a(&cubic_f, &g, &Lattice::Linear, &Poly::one()).is_err());
    }

    #[test]
    fn exact_square_root_for_square_q() {
        let lat = Lattice::exponential(r(1, 4), 256).unwrap();
        match lat {
            Lattice::Exponential { sqrt_q, .. } => assert_eq!(sqrt_q, r(1, 2)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn basis_expansion_round_trip() {
        let l = Poly::linear_root(&Scalar::one());
        let basis: Vec<Poly> = (0..4).map(|k| (0..k).fold(Poly::one(), |acc, _| &acc * &l)).collect();
        let p = Poly::from_ints(&[2, 0, -3, 1]);
        let c = expand_in_basis(&p, &basis).unwrap();
        assert_eq!(combine(&c, &basis), p);
        assert!(expand_in_basis(&Poly::monomial(5), &basis).is_err());
    }

    #[test]
    fn q_to_one_limit_of_dq() {
        let q = &Scalar::one() - &Scalar::ratio(1, 1024);
        let p = Poly::monomial(3);
        let d = apply_lattice_operator(&LatticeOp::Dq(q), &p).unwrap();
        for x in [r(1, 2), r(1, 1), r(2, 1)] {
            let diff = (d.eval(&x) - p.derivative().eval(&x)).abs_f64();
            assert!(diff <= 20.0 / 1024.0, "{diff}");
        }
    }
}
