use dashu_int::UBig;
use dashu_ratio::RBig;

use super::{Scalar, TolerancePolicy};
use crate::error::{Error, Result};

/// Length of a q-Pochhammer product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PochLen {
    Finite(u64),
    Infinite,
}

fn check_unit_interval(q: &Scalar) -> Result<()> {
    let ok = match q.as_rational() {
        Some(r) => *r > RBig::ZERO && *r < RBig::ONE,
        None => {
            let v = q.to_f64();
            v > 0.0 && v < 1.0
        }
    };
    if ok {
        Ok(())
    } else {
        Err(Error::domain("q must lie in (0,1) for an infinite product"))
    }
}

fn is_one(q: &Scalar) -> bool {
    match q.as_rational() {
        Some(r) => *r == RBig::ONE,
        None => (q - &Scalar::one()).value_is_zero(),
    }
}

/// `(a;q)_n = ∏_{i<n} (1 − a qⁱ)`, or the infinite product with a bounded tail.
pub fn q_pochhammer(a: &Scalar, q: &Scalar, n: PochLen, tol: &TolerancePolicy) -> Result<Scalar> {
    match n {
        PochLen::Finite(n) => {
            let mut acc = Scalar::one();
            let mut t = a.clone();
            for _ in 0..n {
                acc = &acc * &(Scalar::one() - &t);
                t = &t * q;
            }
            Ok(acc)
        }
        PochLen::Infinite => {
            check_unit_interval(q)?;
            let prec = tol.precision_bits;
            let qf = q.to_float(prec);
            let qv = qf.to_f64();
            let mut t = a.to_float(prec);
            let mut acc = Scalar::one().to_float(prec);
            for _ in 0..tol.max_terms {
                acc = &acc * &(Scalar::one() - &t);
                t = &t * &qf;
                let tv = t.abs_f64();
                if tv <= 0.5 {
                    // Σ_{j≥i} |a|q^j bounds the log of the remaining factors; factor 2 is the safety margin.
                    let b = 2.0 * tv / (1.0 - qv);
                    let tail = acc.abs_f64() * b.exp_m1();
                    if tail <= tol.series_tail_tol {
                        return Ok(acc.with_added_err(tail, prec));
                    }
                }
            }
            Err(Error::convergence("q-Pochhammer tail bound not met within max_terms"))
        }
    }
}

/// `[n]_q = (1 − qⁿ)/(1 − q)`; negative `n` uses the same formula.
pub fn q_bracket(n: i64, q: &Scalar) -> Result<Scalar> {
    if is_one(q) {
        return Err(Error::domain("q-bracket undefined at q = 1"));
    }
    let one = Scalar::one();
    Ok(&(&one - &q.powi(n)) / &(&one - q))
}

/// `∏_{k=1}^n [k]_base`.
pub fn q_factorial(n: u64, base: &Scalar) -> Result<Scalar> {
    if is_one(base) {
        return Err(Error::domain("q-factorial undefined at base 1"));
    }
    let mut acc = Scalar::one();
    for k in 1..=n as i64 {
        acc = &acc * &q_bracket(k, base)?;
    }
    Ok(acc)
}

/// `(q;q)_x = (q;q)_∞ / (q^{x+1};q)_∞`, a finite exact product when `x` is a non-negative integer.
pub fn q_pochhammer_index(q: &Scalar, x: &RBig, tol: &TolerancePolicy) -> Result<Scalar> {
    if x.denominator() == &UBig::ONE && *x >= RBig::ZERO {
        let n: u64 = x
            .numerator()
            .try_into()
            .map_err(|_| Error::domain("index too large"))?;
        return q_pochhammer(q, q, PochLen::Finite(n), tol);
    }
    let num = q_pochhammer(q, q, PochLen::Infinite, tol)?;
    let shifted = q_power(q, &(x + RBig::ONE), tol.precision_bits)?;
    let den = q_pochhammer(&shifted, q, PochLen::Infinite, tol)?;
    Ok(&num / &den)
}

/// `q^e` for rational `e`; exact for integer exponents.
pub fn q_power(q: &Scalar, e: &RBig, prec: usize) -> Result<Scalar> {
    q.pow_rational(e, prec)
}
