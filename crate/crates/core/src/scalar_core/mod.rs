//! The number type every computation in the crate runs over.
//!
//! A [`Scalar`] is either an exact big rational or an arbitrary-precision
//! binary float that carries an absolute error bound. Mixing the two promotes
//! to the float backend at the float operand's precision.

mod qseries;

pub use qseries::{q_bracket, q_factorial, q_pochhammer, q_pochhammer_index, q_power, PochLen};

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use dashu_float::round::mode::HalfEven;
use dashu_float::{DBig, FBig};
use dashu_int::IBig;
use dashu_ratio::RBig;

use crate::error::{Error, Result};

/// Binary float type used for the float backend.
pub type Float = FBig<HalfEven>;
/// Exact rational type used for the exact backend.
pub type Rational = RBig;

pub const DEFAULT_PRECISION_BITS: usize = 256;

/// Tolerances and resource limits shared by series, sums and identity checks.
#[derive(Clone, Debug, PartialEq)]
pub struct TolerancePolicy {
    /// Absolute bound on the discarded tail of any truncated series or sum.
    pub series_tail_tol: f64,
    /// Default tolerance for identity checks on the float backend.
    pub identity_tol: f64,
    /// Hard cap on the number of terms of any series.
    pub max_terms: usize,
    /// Working precision of the float backend.
    pub precision_bits: usize,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            series_tail_tol: 1e-60,
            identity_tol: 1e-30,
            max_terms: 1_000_000,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }
}

impl TolerancePolicy {
    pub fn with_precision(mut self, bits: usize) -> Self {
        self.precision_bits = bits;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.series_tail_tol > 0.0 && self.identity_tol > 0.0) {
            return Err(Error::domain("tolerances must be positive"));
        }
        if self.series_tail_tol >= self.identity_tol {
            return Err(Error::domain("series_tail_tol must be below identity_tol"));
        }
        if self.max_terms < 64 {
            return Err(Error::domain("max_terms must be at least 64"));
        }
        if self.precision_bits < 64 {
            return Err(Error::domain("precision_bits must be at least 64"));
        }
        Ok(())
    }
}

/// Float value together with an absolute error bound.
#[derive(Clone, Debug)]
pub struct BigFloat {
    value: Float,
    err: f64,
}

impl BigFloat {
    pub fn new(value: Float, err: f64) -> Self {
        BigFloat { value, err: err.abs() }
    }

    pub fn value(&self) -> &Float {
        &self.value
    }

    pub fn err(&self) -> f64 {
        self.err
    }

    pub fn precision(&self) -> usize {
        self.value.precision()
    }

    fn abs_f64(&self) -> f64 {
        float_abs_f64(&self.value)
    }
}

fn float_abs_f64(v: &Float) -> f64 {
    v.to_f64().value().abs()
}

/// Half-ulp style rounding bound for a freshly rounded result.
fn rounding_err(v: &Float, prec: usize) -> f64 {
    float_abs_f64(v) * 2f64.powi(1 - prec as i32)
}

fn rational_to_float(r: &RBig, prec: usize) -> BigFloat {
    let rounded = r.to_float::<HalfEven, 2>(prec);
    let inexact = matches!(rounded, dashu_base::Approximation::Inexact(..));
    let v = rounded.value();
    let err = if inexact { rounding_err(&v, prec) } else { 0.0 };
    BigFloat { value: v, err }
}

fn reprec(v: &Float, prec: usize) -> BigFloat {
    if v.precision() == prec {
        return BigFloat { value: v.clone(), err: 0.0 };
    }
    let rounded = v.clone().with_precision(prec);
    let inexact = matches!(rounded, dashu_base::Approximation::Inexact(..));
    let v = rounded.value();
    let err = if inexact { rounding_err(&v, prec) } else { 0.0 };
    BigFloat { value: v, err }
}

/// Exact rational or error-tracked float.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(RBig),
    Float(BigFloat),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(RBig::ZERO)
    }

    pub fn one() -> Self {
        Scalar::Exact(RBig::ONE)
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::Exact(RBig::from(IBig::from(n)))
    }

    /// The exact fraction `num/den`. Panics when `den` is zero.
    pub fn ratio(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        Scalar::Exact(RBig::from_parts_signed(IBig::from(num), IBig::from(den)))
    }

    pub fn rational(r: RBig) -> Self {
        Scalar::Exact(r)
    }

    /// Float backend value from an `f64`, exact as a binary float.
    pub fn from_f64(x: f64, prec: usize) -> Self {
        let v = Float::try_from(x).expect("finite f64");
        Scalar::Float(reprec(&v, prec))
    }

    pub fn float(value: Float, err: f64) -> Self {
        Scalar::Float(BigFloat::new(value, err))
    }

    /// Parses `"p/q"`, an integer, or a decimal float such as `"1.25e-3"`.
    pub fn parse(s: &str, prec: usize) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() {
            return Err(Error::domain("empty number"));
        }
        if t.contains(['.', 'e', 'E']) && !t.contains('/') {
            let d = DBig::from_str(t).map_err(|_| Error::domain(format!("bad decimal '{t}'")))?;
            let b = d.with_base_and_precision::<2>(prec).value();
            let v: Float = b.with_rounding::<HalfEven>();
            let err = rounding_err(&v, prec);
            return Ok(Scalar::Float(BigFloat { value: v, err }));
        }
        RBig::from_str(t)
            .map(Scalar::Exact)
            .map_err(|_| Error::domain(format!("bad rational '{t}'")))
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn as_rational(&self) -> Option<&RBig> {
        match self {
            Scalar::Exact(r) => Some(r),
            Scalar::Float(_) => None,
        }
    }

    pub fn precision(&self) -> Option<usize> {
        match self {
            Scalar::Exact(_) => None,
            Scalar::Float(f) => Some(f.precision()),
        }
    }

    /// Absolute error bound (zero on the exact backend).
    pub fn err_bound(&self) -> f64 {
        match self {
            Scalar::Exact(_) => 0.0,
            Scalar::Float(f) => f.err,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(r) => r.to_f64().value(),
            Scalar::Float(f) => f.value.to_f64().value(),
        }
    }

    pub fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }

    /// Converts to the float backend at `prec` bits (a no-op for floats of that precision).
    pub fn to_float(&self, prec: usize) -> Scalar {
        Scalar::Float(self.lift(prec))
    }

    fn lift(&self, prec: usize) -> BigFloat {
        match self {
            Scalar::Exact(r) => rational_to_float(r, prec),
            Scalar::Float(f) => {
                let mut b = reprec(&f.value, prec);
                b.err += f.err;
                b
            }
        }
    }

    /// Adds `extra` to the error bound, promoting to the float backend if needed.
    pub fn with_added_err(&self, extra: f64, prec: usize) -> Scalar {
        if extra == 0.0 {
            return self.clone();
        }
        let mut b = match self {
            Scalar::Exact(_) => self.lift(prec),
            Scalar::Float(f) => f.clone(),
        };
        b.err += extra.abs();
        Scalar::Float(b)
    }

    pub fn is_exact_zero(&self) -> bool {
        match self {
            Scalar::Exact(r) => *r == RBig::ZERO,
            Scalar::Float(f) => f.value == Float::ZERO && f.err == 0.0,
        }
    }

    /// Value is exactly zero, irrespective of the error bound.
    pub fn value_is_zero(&self) -> bool {
        match self {
            Scalar::Exact(r) => *r == RBig::ZERO,
            Scalar::Float(f) => f.value == Float::ZERO,
        }
    }

    /// True iff |value| ≤ max(err_bound, tol).
    pub fn is_zero_within_tol(&self, tol: f64) -> bool {
        self.abs_f64() <= self.err_bound().max(tol)
    }

    pub fn signum(&self) -> i32 {
        match self {
            Scalar::Exact(r) => match r.partial_cmp(&RBig::ZERO) {
                Some(Ordering::Less) => -1,
                Some(Ordering::Greater) => 1,
                _ => 0,
            },
            Scalar::Float(f) => match f.value.partial_cmp(&Float::ZERO) {
                Some(Ordering::Less) => -1,
                Some(Ordering::Greater) => 1,
                _ => 0,
            },
        }
    }

    pub fn abs(&self) -> Scalar {
        if self.signum() < 0 {
            -self
        } else {
            self.clone()
        }
    }

    pub fn recip(&self) -> Scalar {
        &Scalar::one() / self
    }

    pub fn powi(&self, n: i64) -> Scalar {
        if n < 0 {
            return self.powi(-n).recip();
        }
        let mut base = self.clone();
        let mut acc = Scalar::one();
        let mut e = n as u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    pub fn sqrt(&self, prec: usize) -> Result<Scalar> {
        if self.signum() < 0 {
            return Err(Error::domain("square root of a negative number"));
        }
        if self.value_is_zero() {
            return Ok(self.clone());
        }
        if let Scalar::Exact(r) = self {
            use dashu_base::{SquareRootRem, UnsignedAbs};
            let (n, rn) = r.numerator().unsigned_abs().sqrt_rem();
            let (d, rd) = r.denominator().sqrt_rem();
            if rn.is_zero() && rd.is_zero() {
                return Ok(Scalar::Exact(RBig::from_parts(n.into(), d)));
            }
        }
        let b = self.lift(prec);
        let r = b.value.sqrt();
        let x = b.abs_f64();
        let prop = if b.err >= x { f64::INFINITY } else { b.err / (x - b.err).sqrt() };
        Ok(Scalar::Float(BigFloat { err: prop + rounding_err(&r, prec), value: r }))
    }

    /// `self^e` for a rational exponent. Integer exponents stay exact.
    pub fn pow_rational(&self, e: &RBig, prec: usize) -> Result<Scalar> {
        if e.denominator() == &dashu_int::UBig::ONE {
            let n: i64 = e
                .numerator()
                .try_into()
                .map_err(|_| Error::domain("exponent too large"))?;
            return Ok(self.powi(n));
        }
        if self.signum() <= 0 {
            return Err(Error::domain("non-integer power of a non-positive number"));
        }
        let work = prec + 32;
        let b = self.lift(work);
        let ef = rational_to_float(e, work).value;
        let r = (&b.value.ln() * &ef).exp();
        let out = reprec(&r, prec);
        let rel_in = b.err / b.abs_f64();
        let e_abs = e.to_f64().value().abs();
        let err = out.err + float_abs_f64(&out.value) * (e_abs * rel_in * 1.01 + 2f64.powi(-(prec as i32)));
        Ok(Scalar::Float(BigFloat { value: out.value, err }))
    }

    /// |a − b| ≤ tol + err(a) + err(b).
    pub fn approx_eq(&self, other: &Scalar, tol: f64) -> bool {
        let d = self - other;
        d.abs_f64() <= tol + d.err_bound()
    }

    /// Decimal rendering with `digits` significant digits (floats) or `p/q` (exact).
    pub fn to_decimal_string(&self, digits: usize) -> String {
        match self {
            Scalar::Exact(r) => r.to_string(),
            Scalar::Float(f) => format_float(&f.value, digits),
        }
    }
}

/// Scientific decimal rendering of a binary float.
pub fn format_float(v: &Float, digits: usize) -> String {
    if *v == Float::ZERO {
        return "0".to_string();
    }
    let d = v.to_decimal().value().with_precision(digits.max(1)).value();
    let repr = d.repr();
    let sig = repr.significand();
    let neg = sig < &IBig::ZERO;
    let mut s = if neg { (-sig).to_string() } else { sig.to_string() };
    let mut exp = repr.exponent() as i64;
    while s.len() > 1 && s.ends_with('0') {
        s.pop();
        exp += 1;
    }
    let e10 = exp + s.len() as i64 - 1;
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&s[..1]);
    if s.len() > 1 {
        out.push('.');
        out.push_str(&s[1..]);
    }
    out.push('e');
    out.push_str(&e10.to_string());
    out
}

/// Decimal digits that faithfully represent `prec` bits.
pub fn digits_for_bits(prec: usize) -> usize {
    ((prec as f64) * std::f64::consts::LOG10_2).ceil() as usize + 1
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(r) => write!(f, "{r}"),
            Scalar::Float(b) => write!(f, "{}", format_float(&b.value, digits_for_bits(b.precision()))),
        }
    }
}

impl PartialEq for Scalar {
    /// Structural equality: same backend, same value, same error bound.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            (Scalar::Float(a), Scalar::Float(b)) => a.value == b.value && a.err == b.err,
            _ => false,
        }
    }
}

impl From<i64> for Scalar {
    fn from(n: i64) -> Self {
        Scalar::from_int(n)
    }
}

impl From<RBig> for Scalar {
    fn from(r: RBig) -> Self {
        Scalar::Exact(r)
    }
}

fn float_pair(a: &Scalar, b: &Scalar) -> (BigFloat, BigFloat, usize) {
    let prec = a.precision().unwrap_or(0).max(b.precision().unwrap_or(0));
    let prec = if prec == 0 { DEFAULT_PRECISION_BITS } else { prec };
    (a.lift(prec), b.lift(prec), prec)
}

impl<'a> Add<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a + b),
            _ => {
                let (a, b, prec) = float_pair(self, rhs);
                let v = &a.value + &b.value;
                let err = a.err + b.err + rounding_err(&v, prec);
                Scalar::Float(BigFloat { value: v, err })
            }
        }
    }
}

impl<'a> Sub<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a - b),
            _ => {
                let (a, b, prec) = float_pair(self, rhs);
                let v = &a.value - &b.value;
                let err = a.err + b.err + rounding_err(&v, prec);
                Scalar::Float(BigFloat { value: v, err })
            }
        }
    }
}

impl<'a> Mul<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a * b),
            _ => {
                let (a, b, prec) = float_pair(self, rhs);
                let v = &a.value * &b.value;
                let err = a.abs_f64() * b.err + b.abs_f64() * a.err + a.err * b.err + rounding_err(&v, prec);
                Scalar::Float(BigFloat { value: v, err })
            }
        }
    }
}

impl<'a> Div<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    /// Panics on an exact-zero or float-zero divisor.
    fn div(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => {
                assert!(*b != RBig::ZERO, "division by exact zero");
                Scalar::Exact(a / b)
            }
            _ => {
                let (a, b, prec) = float_pair(self, rhs);
                assert!(b.value != Float::ZERO, "division by zero");
                let v = &a.value / &b.value;
                let bd = b.abs_f64();
                let err = if b.err >= bd {
                    f64::INFINITY
                } else {
                    (a.err + float_abs_f64(&v) * b.err) / (bd - b.err)
                };
                let err = err + rounding_err(&v, prec);
                Scalar::Float(BigFloat { value: v, err })
            }
        }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(a) => Scalar::Exact(-a.clone()),
            Scalar::Float(f) => Scalar::Float(BigFloat { value: -f.value.clone(), err: f.err }),
        }
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        -&self
    }
}

macro_rules! owned_binop {
    ($tr:ident, $m:ident) => {
        impl $tr<Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                (&self).$m(&rhs)
            }
        }
        impl<'a> $tr<&'a Scalar> for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: &Scalar) -> Scalar {
                (&self).$m(rhs)
            }
        }
        impl<'a> $tr<Scalar> for &'a Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                self.$m(&rhs)
            }
        }
    };
}

owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);
owned_binop!(Div, div);

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::zero(), |acc, x| acc + x)
    }
}
