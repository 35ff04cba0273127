//! The five classical weight families: parameters, lattice sites, weights,
//! Pearson pairs, monic orthogonal polynomials and the constants `h_n`, `c_n`.

use std::fmt;

use dashu_int::{IBig, UBig};
use dashu_ratio::RBig;

use crate::error::{Error, Result};
use crate::inner_products::{Measure, MeasureKind, Window};
use crate::polynomials::{Lattice, Poly};
use crate::scalar_core::{q_pochhammer, q_pochhammer_index, q_power, PochLen, Scalar, TolerancePolicy};

/// Family tag with its parameters, all exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Meixner { beta: RBig, a: RBig },
    Charlier { a: RBig },
    Hahn { alpha: RBig, beta: RBig, n: u32 },
    AlSalamCarlitz { alpha: RBig, q: RBig },
    LittleQJacobi { alpha: RBig, beta: RBig, q: RBig },
}

/// Which ladder a q-lattice site sits on: `q^s` or `α q^s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    One,
    Alpha,
}

/// A lattice point, addressed combinatorially so that shifts are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Int(i64),
    Ladder { branch: Branch, s: u32 },
}

/// Support of a family.
#[derive(Clone, Debug, PartialEq)]
pub enum SupportDescriptor {
    /// `lo..=hi`, or unbounded above when `hi` is `None`.
    IntegerRange { lo: i64, hi: Option<i64> },
    /// Geometric ladders `anchor · q^s`, `s ≥ 0`.
    QLadder { anchors: Vec<RBig> },
}

/// A classical family together with the numeric context it is evaluated in.
#[derive(Clone, Debug)]
pub struct WeightFamily {
    family: Family,
    lattice: Lattice,
    tol: TolerancePolicy,
    // normalising constants of the q-weights, precomputed once
    consts: Vec<Scalar>,
}

impl PartialEq for WeightFamily {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.tol == other.tol
    }
}

pub(crate) fn rs(r: &RBig) -> Scalar {
    Scalar::rational(r.clone())
}

fn ri(n: i64) -> RBig {
    RBig::from(IBig::from(n))
}

fn is_integer(r: &RBig) -> bool {
    r.denominator() == &UBig::ONE
}

/// `[e]_q` for a rational exponent.
pub(crate) fn bracket_r(e: &RBig, q: &Scalar, prec: usize) -> Result<Scalar> {
    let one = Scalar::one();
    Ok(&(&one - &q_power(q, e, prec)?) / &(&one - q))
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Meixner { beta, a } => write!(f, "meixner(beta={beta}, a={a})"),
            Family::Charlier { a } => write!(f, "charlier(a={a})"),
            Family::Hahn { alpha, beta, n } => write!(f, "hahn(alpha={alpha}, beta={beta}, N={n})"),
            Family::AlSalamCarlitz { alpha, q } => write!(f, "alsalamcarlitz(alpha={alpha}, q={q})"),
            Family::LittleQJacobi { alpha, beta, q } => write!(f, "littleqjacobi(alpha={alpha}, beta={beta}, q={q})"),
        }
    }
}

impl WeightFamily {
    /// Validates the parameter ranges and precomputes constants.
    pub fn new(family: Family, tol: TolerancePolicy) -> Result<Self> {
        tol.validate()?;
        let zero = RBig::ZERO;
        let one = RBig::ONE;
        let prec = tol.precision_bits;
        let bad = |m: &str| Err(Error::domain(m.to_string()));
        let mut consts = Vec::new();
        let lattice = match &family {
            Family::Meixner { beta, a } => {
                if *beta <= zero || *a <= zero || *a >= one {
                    return bad("meixner needs beta > 0 and 0 < a < 1");
                }
                Lattice::Linear
            }
            Family::Charlier { a } => {
                if *a <= zero {
                    return bad("charlier needs a > 0");
                }
                Lattice::Linear
            }
            Family::Hahn { alpha, beta, n } => {
                if *alpha <= zero || *beta <= zero || *n == 0 {
                    return bad("hahn needs alpha > 0, beta > 0 and N >= 1");
                }
                Lattice::Linear
            }
            Family::AlSalamCarlitz { alpha, q } => {
                if *alpha >= zero {
                    return bad("al-salam-carlitz needs alpha < 0");
                }
                if *q <= zero || *q >= one {
                    return bad("q must lie in (0,1)");
                }
                let qs = rs(q);
                let al = rs(alpha);
                // ρ(q^s) = C₁ /((q;q)_s (q/α;q)_s),  ρ(αq^s) = C₂ /((α;q)_{s+1} (q;q)_s)
                let c1 = q_pochhammer(&al, &qs, PochLen::Infinite, &tol)?.recip();
                let c2 = q_pochhammer(&(&qs / &al), &qs, PochLen::Infinite, &tol)?.recip();
                consts.push(c1);
                consts.push(c2);
                Lattice::exponential(qs, prec)?
            }
            Family::LittleQJacobi { alpha, beta, q } => {
                let m1 = -RBig::ONE;
                if *alpha <= m1 || *beta <= m1 {
                    return bad("little q-jacobi needs alpha > -1 and beta > -1");
                }
                if *q <= zero || *q >= one {
                    return bad("q must lie in (0,1)");
                }
                let qs = rs(q);
                // ρ(q^s) = (q;q)_β (q^{β+1};q)_s/(q;q)_s · (q^α)^s
                consts.push(q_pochhammer_index(&qs, beta, &tol)?);
                consts.push(q_power(&qs, alpha, prec)?);
                consts.push(q_power(&qs, &(beta + &one), prec)?);
                Lattice::exponential(qs, prec)?
            }
        };
        Ok(WeightFamily { family, lattice, tol, consts })
    }

    pub fn meixner(beta: RBig, a: RBig, tol: TolerancePolicy) -> Result<Self> {
        Self::new(Family::Meixner { beta, a }, tol)
    }

    pub fn charlier(a: RBig, tol: TolerancePolicy) -> Result<Self> {
        Self::new(Family::Charlier { a }, tol)
    }

    pub fn hahn(alpha: RBig, beta: RBig, n: u32, tol: TolerancePolicy) -> Result<Self> {
        Self::new(Family::Hahn { alpha, beta, n }, tol)
    }

    pub fn al_salam_carlitz(alpha: RBig, q: RBig, tol: TolerancePolicy) -> Result<Self> {
        Self::new(Family::AlSalamCarlitz { alpha, q }, tol)
    }

    pub fn little_q_jacobi(alpha: RBig, beta: RBig, q: RBig, tol: TolerancePolicy) -> Result<Self> {
        Self::new(Family::LittleQJacobi { alpha, beta, q }, tol)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn tol(&self) -> &TolerancePolicy {
        &self.tol
    }

    pub fn prec(&self) -> usize {
        self.tol.precision_bits
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.lattice, Lattice::Linear)
    }

    /// Same family with a different tolerance policy.
    pub fn with_tol(&self, tol: TolerancePolicy) -> Result<Self> {
        Self::new(self.family.clone(), tol)
    }

    /// `q`, present on the exponential lattice.
    pub fn q(&self) -> Option<Scalar> {
        self.lattice.q().cloned()
    }

    fn q_rat(&self) -> Option<&RBig> {
        match &self.family {
            Family::AlSalamCarlitz { q, .. } | Family::LittleQJacobi { q, .. } => Some(q),
            _ => None,
        }
    }

    /// Short lowercase name used on the command line.
    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Meixner { .. } => "meixner",
            Family::Charlier { .. } => "charlier",
            Family::Hahn { .. } => "hahn",
            Family::AlSalamCarlitz { .. } => "alsalamcarlitz",
            Family::LittleQJacobi { .. } => "littleqjacobi",
        }
    }

    /// Upper end of a finite integer support.
    pub fn hahn_n(&self) -> Option<u32> {
        match self.family {
            Family::Hahn { n, .. } => Some(n),
            _ => None,
        }
    }

    pub fn support(&self) -> SupportDescriptor {
        match &self.family {
            Family::Hahn { n, .. } => SupportDescriptor::IntegerRange { lo: 0, hi: Some(*n as i64) },
            Family::Meixner { .. } | Family::Charlier { .. } => SupportDescriptor::IntegerRange { lo: 0, hi: None },
            Family::AlSalamCarlitz { alpha, .. } => SupportDescriptor::QLadder { anchors: vec![RBig::ONE, alpha.clone()] },
            Family::LittleQJacobi { .. } => SupportDescriptor::QLadder { anchors: vec![RBig::ONE] },
        }
    }

    /// Ladders carrying mass, in a fixed order.
    pub fn branches(&self) -> Vec<Branch> {
        match self.family {
            Family::AlSalamCarlitz { .. } => vec![Branch::One, Branch::Alpha],
            _ => vec![Branch::One],
        }
    }

    fn anchor(&self, b: Branch) -> Result<RBig> {
        match (&self.family, b) {
            (_, Branch::One) => Ok(RBig::ONE),
            (Family::AlSalamCarlitz { alpha, .. }, Branch::Alpha) => Ok(alpha.clone()),
            _ => Err(Error::domain("this family has no alpha branch")),
        }
    }

    /// Coordinate of a site, always exact.
    pub fn site_x(&self, site: &Site) -> Result<Scalar> {
        match (site, self.q_rat()) {
            (Site::Int(i), None) => Ok(Scalar::from_int(*i)),
            (Site::Ladder { branch, s }, Some(q)) => {
                let a = self.anchor(*branch)?;
                Ok(rs(&(a * pow_r(q, *s))))
            }
            _ => Err(Error::domain("site does not belong to this lattice")),
        }
    }

    /// Locates a rational coordinate on the lattice.
    pub fn site_of(&self, x: &Scalar) -> Result<Site> {
        let r = x
            .as_rational()
            .ok_or_else(|| Error::domain("lattice points must be exact rationals"))?;
        match self.q_rat() {
            None => {
                if !is_integer(r) {
                    return Err(Error::domain(format!("{r} is not an integer lattice point")));
                }
                let i: i64 = r.numerator().try_into().map_err(|_| Error::domain("site out of range"))?;
                Ok(Site::Int(i))
            }
            Some(q) => {
                for b in self.branches() {
                    let a = self.anchor(b)?;
                    let mut t = r / &a;
                    let mut s = 0u32;
                    while t > RBig::ZERO && t <= RBig::ONE && s <= 100_000 {
                        if t == RBig::ONE {
                            return Ok(Site::Ladder { branch: b, s });
                        }
                        t = t / q;
                        s += 1;
                    }
                }
                Err(Error::domain(format!("{r} is not a ladder point")))
            }
        }
    }

    /// `x + 1` on the linear lattice, `q x` on the ladder.
    pub fn forward(&self, site: &Site) -> Site {
        match *site {
            Site::Int(i) => Site::Int(i + 1),
            Site::Ladder { branch, s } => Site::Ladder { branch, s: s + 1 },
        }
    }

    /// Whether the site lies in the support (where ρ may be nonzero).
    pub fn in_support(&self, site: &Site) -> bool {
        match (site, &self.family) {
            (Site::Int(i), Family::Hahn { n, .. }) => *i >= 0 && *i <= *n as i64,
            (Site::Int(i), Family::Meixner { .. } | Family::Charlier { .. }) => *i >= 0,
            (Site::Ladder { branch: Branch::One, .. }, Family::AlSalamCarlitz { .. } | Family::LittleQJacobi { .. }) => true,
            (Site::Ladder { branch: Branch::Alpha, .. }, Family::AlSalamCarlitz { .. }) => true,
            _ => false,
        }
    }

    fn check_site(&self, site: &Site) -> Result<()> {
        match (site, self.is_linear()) {
            (Site::Int(_), true) => Ok(()),
            (Site::Ladder { branch, .. }, false) => self.anchor(*branch).map(|_| ()),
            _ => Err(Error::domain("site does not belong to this lattice")),
        }
    }

    /// ρ at a lattice point, from the product form of the weight.
    pub fn weight_at_site(&self, site: &Site) -> Result<Scalar> {
        self.check_site(site)?;
        if !self.in_support(site) {
            return Ok(Scalar::zero());
        }
        Ok(match (&self.family, *site) {
            (Family::Charlier { a }, Site::Int(x)) => {
                let mut acc = RBig::ONE;
                for i in 1..=x {
                    acc = acc * a / ri(i);
                }
                rs(&acc)
            }
            (Family::Meixner { beta, a }, Site::Int(x)) => {
                let mut acc = RBig::ONE;
                for i in 0..x {
                    acc = acc * (beta + ri(i)) * a / ri(i + 1);
                }
                rs(&acc)
            }
            (Family::Hahn { alpha, beta, n }, Site::Int(x)) => {
                let mut acc = RBig::ONE;
                for i in 1..=x {
                    acc = acc * (alpha + ri(i)) / ri(i);
                }
                for i in 1..=(*n as i64 - x) {
                    acc = acc * (beta + ri(i)) / ri(i);
                }
                rs(&acc)
            }
            (Family::AlSalamCarlitz { alpha, q }, Site::Ladder { branch, s }) => {
                let mut acc = RBig::ONE;
                let mut qi = q.clone();
                for _ in 0..s {
                    let t = match branch {
                        Branch::One => (RBig::ONE - &qi) * (RBig::ONE - &qi / alpha),
                        Branch::Alpha => (RBig::ONE - &qi) * (RBig::ONE - alpha * &qi),
                    };
                    acc = acc / t;
                    qi = qi * q;
                }
                match branch {
                    Branch::One => &rs(&acc) * &self.consts[0],
                    Branch::Alpha => &rs(&(acc / (RBig::ONE - alpha))) * &self.consts[1],
                }
            }
            (Family::LittleQJacobi { .. }, Site::Ladder { s, .. }) => {
                let q = self.q().expect("q-lattice");
                let poch_b = q_pochhammer(&self.consts[2], &q, PochLen::Finite(s as u64), &self.tol)?;
                let poch_q = q_pochhammer(&q, &q, PochLen::Finite(s as u64), &self.tol)?;
                &(&(&self.consts[0] * &poch_b) / &poch_q) * &self.consts[1].powi(s as i64)
            }
            _ => unreachable!("site checked against lattice"),
        })
    }

    /// ρ at a coordinate; off-lattice points are a domain error.
    pub fn weight_at(&self, x: &Scalar) -> Result<Scalar> {
        self.weight_at_site(&self.site_of(x)?)
    }

    /// `ρ(forward(site)) / ρ(site)` for a site in the support, from the
    /// product form. Used to generate weights incrementally.
    pub fn weight_step(&self, site: &Site) -> Scalar {
        match (&self.family, *site) {
            (Family::Charlier { a }, Site::Int(x)) => rs(&(a / ri(x + 1))),
            (Family::Meixner { beta, a }, Site::Int(x)) => rs(&(a * (beta + ri(x)) / ri(x + 1))),
            (Family::Hahn { alpha, beta, n }, Site::Int(x)) => {
                let n = *n as i64;
                if x >= n {
                    return Scalar::zero();
                }
                rs(&((alpha + ri(x + 1)) * ri(n - x) / (ri(x + 1) * (beta + ri(n - x)))))
            }
            (Family::AlSalamCarlitz { alpha, q }, Site::Ladder { branch, s }) => {
                let qi = pow_r(q, s + 1);
                let t = match branch {
                    Branch::One => (RBig::ONE - &qi) * (RBig::ONE - &qi / alpha),
                    Branch::Alpha => (RBig::ONE - &qi) * (RBig::ONE - alpha * &qi),
                };
                rs(&(RBig::ONE / t))
            }
            (Family::LittleQJacobi { q, .. }, Site::Ladder { s, .. }) => {
                let qs = rs(q);
                let qsp = qs.powi(s as i64);
                let num = &Scalar::one() - &(&self.consts[2] * &qsp);
                let den = &Scalar::one() - &(&qsp * &qs);
                &(&num / &den) * &self.consts[1]
            }
            _ => Scalar::zero(),
        }
    }

    /// Limit of the mass-ratio `m(next)/m(site)` along the support tail,
    /// where the mass is ρ (linear) or `|x|ρ` (ladder).
    pub fn tail_ratio_limit(&self) -> f64 {
        match &self.family {
            Family::Charlier { .. } | Family::Hahn { .. } => 0.0,
            Family::Meixner { a, .. } => a.to_f64().value(),
            Family::AlSalamCarlitz { q, .. } => q.to_f64().value(),
            Family::LittleQJacobi { q, .. } => q.to_f64().value() * self.consts[1].to_f64(),
        }
    }

    /// The Pearson pair `(f, g)`.
    pub fn pearson_pair(&self) -> (Poly, Poly) {
        match &self.family {
            Family::Meixner { beta, a } => (Poly::x(), Poly::from_coeffs(vec![rs(&(a * beta)), rs(&(a - RBig::ONE))])),
            Family::Charlier { a } => (Poly::x(), Poly::from_coeffs(vec![rs(a), Scalar::from_int(-1)])),
            Family::Hahn { alpha, beta, n } => {
                let nn = ri(*n as i64);
                let f = Poly::from_coeffs(vec![Scalar::zero(), rs(&(&nn + beta + RBig::ONE)), Scalar::from_int(-1)]);
                let g = Poly::from_coeffs(vec![rs(&(&nn * (alpha + RBig::ONE))), rs(&-(alpha + beta + ri(2)))]);
                (f, g)
            }
            Family::AlSalamCarlitz { alpha, q } => {
                let sq = self.sqrt_q();
                let f = Poly::from_coeffs(vec![rs(alpha), rs(&-(alpha + RBig::ONE)), Scalar::one()]);
                let s = &sq / &rs(&(RBig::ONE - q));
                let g = Poly::from_coeffs(vec![&-&s * &rs(&(alpha + RBig::ONE)), s]);
                (f, g)
            }
            Family::LittleQJacobi { alpha, beta, .. } => {
                let sq = self.sqrt_q();
                let q = self.q().expect("q-lattice");
                let prec = self.prec();
                let f = Poly::from_ints(&[0, 1, -1]);
                let b1 = bracket_r(&(alpha + RBig::ONE), &q, prec).expect("q in (0,1)");
                let b2 = bracket_r(&(alpha + beta + ri(2)), &q, prec).expect("q in (0,1)");
                let g = Poly::from_coeffs(vec![&sq * &b1, -(&sq * &b2)]);
                (f, g)
            }
        }
    }

    /// `q^{1/2}` on the q-ladder, 1 on the linear lattice.
    pub fn sqrt_q(&self) -> Scalar {
        match &self.lattice {
            Lattice::Exponential { sqrt_q, .. } => sqrt_q.clone(),
            Lattice::Linear => Scalar::one(),
        }
    }

    /// Sites `0..window` that are checked by [`Self::verify_pearson`], plus
    /// the lower boundary site on the linear lattice.
    fn pearson_sites(&self, window: usize) -> Vec<Site> {
        if self.is_linear() {
            let hi = match self.hahn_n() {
                Some(n) => (window as i64).min(n as i64 + 1),
                None => window as i64,
            };
            (-1..hi).map(Site::Int).collect()
        } else {
            self.branches()
                .into_iter()
                .flat_map(|b| (0..window as u32).map(move |s| Site::Ladder { branch: b, s }))
                .collect()
        }
    }

    /// Max of the cross-multiplied Pearson residual over the window.
    pub fn verify_pearson(&self, window: usize) -> Result<Scalar> {
        if window < 2 {
            return Err(Error::domain("window must be at least 2"));
        }
        let (f, g) = self.pearson_pair();
        let mut worst = Scalar::zero();
        for site in self.pearson_sites(window) {
            let next = self.forward(&site);
            let x = self.site_x(&site)?;
            let xn = self.site_x(&next)?;
            let lhs = &self.weight_at_site(&next)? * &f.eval(&xn);
            let rhs = match &self.lattice {
                Lattice::Linear => &f.eval(&x) + &g.eval(&x),
                Lattice::Exponential { q, sqrt_q } => {
                    let t = &(&(&Scalar::one() - q) * &x) * &g.eval(&x);
                    &f.eval(&x) - &(&t / sqrt_q)
                }
            };
            let r = (&lhs - &(&self.weight_at_site(&site)? * &rhs)).abs();
            if r.abs_f64() + r.err_bound() > worst.abs_f64() + worst.err_bound() {
                worst = r;
            }
        }
        Ok(worst)
    }

    /// ω at a site: `f(x+1)ρ(x+1)` (linear) or `f(qx)ρ(qx)` (ladder).
    pub fn symplectic_weight_at_site(&self, site: &Site) -> Result<Scalar> {
        self.check_site(site)?;
        let next = self.forward(site);
        let (f, _) = self.pearson_pair();
        Ok(&f.eval(&self.site_x(&next)?) * &self.weight_at_site(&next)?)
    }

    pub fn symplectic_weight_at(&self, x: &Scalar) -> Result<Scalar> {
        self.symplectic_weight_at_site(&self.site_of(x)?)
    }

    /// Monic orthogonal polynomials `p_0..=p_{n_max}` from their classical
    /// recurrences or explicit sums.
    pub fn classical_ops(&self, n_max: usize) -> Result<Vec<Poly>> {
        if let Some(n) = self.hahn_n() {
            if n_max > n as usize {
                return Err(Error::domain(format!("hahn polynomials exist up to degree N = {n}")));
            }
        }
        if let Family::LittleQJacobi { alpha, beta, .. } = &self.family {
            return (0..=n_max).map(|n| self.lqj_poly(n, alpha, beta)).collect();
        }
        let mut ps = vec![Poly::one()];
        let mut prev = Poly::zero();
        for n in 0..n_max {
            let (b, lam) = self.recurrence(n)?;
            let next = &(&ps[n].mul_x() - &ps[n].scale(&b)) - &prev.scale(&lam);
            prev = ps[n].clone();
            ps.push(next);
        }
        Ok(ps)
    }

    /// `(b_n, λ_n)` in `x p_n = p_{n+1} + b_n p_n + λ_n p_{n−1}`.
    fn recurrence(&self, n: usize) -> Result<(Scalar, Scalar)> {
        let nr = ri(n as i64);
        Ok(match &self.family {
            Family::Charlier { a } => (rs(&(&nr + a)), rs(&(&nr * a))),
            Family::Meixner { beta, a } => {
                let om = RBig::ONE - a;
                let b = (&nr + (&nr + beta) * a) / &om;
                let l = &nr * (&nr + beta - RBig::ONE) * a / (&om * &om);
                (rs(&b), rs(&l))
            }
            Family::Hahn { alpha, beta, n: big_n } => {
                let nn = ri(*big_n as i64);
                let ab = alpha + beta;
                let a_n = |k: &RBig| {
                    (k + &ab + RBig::ONE) * (k + alpha + RBig::ONE) * (&nn - k)
                        / ((ri(2) * k + &ab + RBig::ONE) * (ri(2) * k + &ab + ri(2)))
                };
                let c_n = |k: &RBig| {
                    if *k == RBig::ZERO {
                        RBig::ZERO
                    } else {
                        k * (k + &ab + &nn + RBig::ONE) * (k + beta) / ((ri(2) * k + &ab) * (ri(2) * k + &ab + RBig::ONE))
                    }
                };
                let b = a_n(&nr) + c_n(&nr);
                let l = if n == 0 { RBig::ZERO } else { a_n(&(&nr - RBig::ONE)) * c_n(&nr) };
                (rs(&b), rs(&l))
            }
            Family::AlSalamCarlitz { alpha, q } => {
                // U_{n+1} = (x − (1+α)qⁿ)U_n + αq^{n−1}(1−qⁿ)U_{n−1}
                let qn = pow_r(q, n as u32);
                let b = (RBig::ONE + alpha) * &qn;
                let l = if n == 0 { RBig::ZERO } else { -(alpha * pow_r(q, n as u32 - 1) * (RBig::ONE - &qn)) };
                (rs(&b), rs(&l))
            }
            Family::LittleQJacobi { .. } => unreachable!("explicit sum"),
        })
    }

    fn lqj_poly(&self, n: usize, alpha: &RBig, beta: &RBig) -> Result<Poly> {
        let q = self.q().expect("q-lattice");
        let prec = self.prec();
        let tol = &self.tol;
        let nn = ri(n as i64);
        let qa1 = q_power(&q, &(alpha + RBig::ONE), prec)?;
        let qnab = q_power(&q, &(&nn + alpha + beta + RBig::ONE), prec)?;
        let qmn = q.powi(-(n as i64));
        let n_fin = PochLen::Finite(n as u64);
        let pre = &(&q_power(&q, &((&nn + alpha) * &nn), prec)? * &q_pochhammer(&q_power(&q, &-(&nn + alpha), prec)?, &q, n_fin, tol)?)
            / &q_pochhammer(&qnab, &q, n_fin, tol)?;
        let mut coeffs = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let kf = PochLen::Finite(k as u64);
            let num = &q_pochhammer(&qmn, &q, kf, tol)? * &q_pochhammer(&qnab, &q, kf, tol)?;
            let den = &q_pochhammer(&qa1, &q, kf, tol)? * &q_pochhammer(&q, &q, kf, tol)?;
            coeffs.push(&(&pre * &(&num / &den)) * &q.powi(k as i64));
        }
        let mut p = Poly::from_coeffs(coeffs);
        if !p.is_exact() {
            // pin the leading coefficient so the float result is exactly monic
            let mut c = p.coeffs().to_vec();
            let lead = c[n].clone();
            let e = (&lead - &Scalar::one()).abs_f64() + lead.err_bound();
            c[n] = Scalar::one();
            for v in c.iter_mut().take(n) {
                *v = v.with_added_err(e * v.abs_f64(), prec);
            }
            p = Poly::from_coeffs(c);
        }
        Ok(p)
    }

    /// Normalisation `h_n = ⟨p_n, p_n⟩` in the Jackson convention on the
    /// exponential lattice (so positive for positive weights).
    pub fn h_norm(&self, n: usize) -> Result<Scalar> {
        if let Some(big_n) = self.hahn_n() {
            if n > big_n as usize {
                return Err(Error::domain(format!("n = {n} exceeds N = {big_n}")));
            }
        }
        match &self.family {
            Family::AlSalamCarlitz { alpha, q } => {
                let qq = rs(q);
                let poch = q_pochhammer(&qq, &qq, PochLen::Finite(n as u64), &self.tol)?;
                let binom = (n * n.saturating_sub(1) / 2) as u32;
                Ok(&rs(&((RBig::ONE - q) * pow_r(&-alpha.clone(), n as u32) * pow_r(q, binom))) * &poch)
            }
            Family::LittleQJacobi { alpha, beta, .. } => self.lqj_h(n, alpha, beta, false),
            _ => {
                let p = self.classical_ops(n)?.pop().expect("n+1 polynomials");
                let m = Measure::new(self, MeasureKind::Orthogonality, Window::Auto)?;
                m.integrate(&(&p * &p))
            }
        }
    }

    /// Little q-Jacobi normalisation with the prefactor `q^{n(n+α+2)}` as
    /// printed in the source, kept for comparison against the computed value.
    pub fn h_norm_printed(&self, n: usize) -> Result<Scalar> {
        match &self.family {
            Family::LittleQJacobi { alpha, beta, .. } => self.lqj_h(n, alpha, beta, true),
            _ => self.h_norm(n),
        }
    }

    fn lqj_h(&self, n: usize, alpha: &RBig, beta: &RBig, printed: bool) -> Result<Scalar> {
        let q = self.q().expect("q-lattice");
        let prec = self.prec();
        let tol = &self.tol;
        let nn = ri(n as i64);
        let e = if printed { &nn * (&nn + alpha + ri(2)) } else { &nn * (&nn + alpha) };
        let qqx = |x: RBig| q_pochhammer_index(&q, &x, tol);
        let num = &(&(&qqx(&nn + alpha + beta)? * &qqx(&nn + alpha)?) * &qqx(&nn + beta)?) * &qqx(nn.clone())?;
        let d = qqx(ri(2) * &nn + alpha + beta)?;
        let den = &(&d * &d) * &bracket_r(&(ri(2) * &nn + alpha + beta + RBig::ONE), &q, prec)?;
        Ok(&(&q_power(&q, &e, prec)? * &num) / &den)
    }

    /// The constant `c_n` of the tridiagonal action of 𝒜.
    pub fn c_const(&self, n: usize) -> Result<Scalar> {
        match &self.family {
            Family::Meixner { a, .. } => Ok(&rs(&(RBig::ONE - a)) * &self.h_norm(n + 1)?),
            Family::Charlier { .. } => self.h_norm(n + 1),
            Family::Hahn { alpha, beta, .. } => {
                Ok(&rs(&(ri(2 * n as i64) + alpha + beta + ri(2))) * &self.h_norm(n + 1)?)
            }
            Family::AlSalamCarlitz { alpha, q } => {
                let qq = rs(q);
                let poch = q_pochhammer(&qq, &qq, PochLen::Finite(n as u64 + 1), &self.tol)?;
                let binom = (n * n.saturating_sub(1) / 2) as u32;
                Ok(-(&rs(&(pow_r(&-alpha.clone(), n as u32 + 1) * pow_r(q, binom))) * &poch))
            }
            Family::LittleQJacobi { alpha, beta, .. } => {
                let q = self.q().expect("q-lattice");
                let b = bracket_r(&(ri(2 * n as i64 + 2) + alpha + beta), &q, self.prec())?;
                Ok(&(&q.powi(-(n as i64)) * &b) * &self.h_norm(n + 1)?)
            }
        }
    }

    /// The same family with shifted parameters `(α+dα, β+dβ)`; little
    /// q-Jacobi only.
    pub fn lqj_shifted(&self, da: i64, db: i64) -> Result<WeightFamily> {
        match &self.family {
            Family::LittleQJacobi { alpha, beta, q } => {
                Self::little_q_jacobi(alpha + ri(da), beta + ri(db), q.clone(), self.tol.clone())
            }
            _ => Err(Error::domain("parameter shift is defined for little q-jacobi only")),
        }
    }
}

/// Converts a Jackson-convention normalisation to the signed convention
/// `h = −q^{−1/2} h̃` used for non-increasing lattices.
pub fn h_from_tilde(h_tilde: &Scalar, sqrt_q: &Scalar) -> Scalar {
    -(h_tilde / sqrt_q)
}

pub(crate) fn pow_r(r: &RBig, e: u32) -> RBig {
    let mut acc = RBig::ONE;
    for _ in 0..e {
        acc = acc * r;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> RBig {
        RBig::from_parts_signed(IBig::from(n), IBig::from(d))
    }

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    pub(crate) fn defaults() -> Vec<WeightFamily> {
        vec![
            WeightFamily::meixner(r(1, 1), r(1, 2), tol()).unwrap(),
            WeightFamily::charlier(r(1, 1), tol()).unwrap(),
            WeightFamily::hahn(r(1, 1), r(1, 1), 12, tol()).unwrap(),
            WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap(),
            WeightFamily::little_q_jacobi(r(1, 1), r(1, 1), r(1, 2), tol()).unwrap(),
        ]
    }

    #[test]
    fn parameter_ranges() {
        assert!(WeightFamily::meixner(r(1, 1), r(1, 1), tol()).is_err());
        assert!(WeightFamily::charlier(r(0, 1), tol()).is_err());
        assert!(WeightFamily::hahn(r(1, 1), r(1, 1), 0, tol()).is_err());
        assert!(WeightFamily::al_salam_carlitz(r(1, 2), r(1, 2), tol()).is_err());
        assert!(WeightFamily::little_q_jacobi(r(-1, 1), r(0, 1), r(1, 2), tol()).is_err());
        assert!(WeightFamily::little_q_jacobi(r(0, 1), r(0, 1), r(3, 2), tol()).is_err());
    }

    #[test]
    fn linear_weights() {
        let c = WeightFamily::charlier(r(1, 1), tol()).unwrap();
        assert_eq!(c.weight_at(&Scalar::zero()).unwrap(), Scalar::one());
        assert_eq!(c.weight_at(&Scalar::from_int(3)).unwrap(), Scalar::ratio(1, 6));
        assert!(c.weight_at(&Scalar::ratio(1, 2)).is_err());
        assert_eq!(c.weight_at(&Scalar::from_int(-1)).unwrap(), Scalar::zero());
        let h = WeightFamily::hahn(r(1, 1), r(1, 1), 2, tol()).unwrap();
        // C(2,1)·C(2,1)
        assert_eq!(h.weight_at(&Scalar::one()).unwrap(), Scalar::from_int(4));
        assert_eq!(h.weight_at(&Scalar::from_int(0)).unwrap(), Scalar::from_int(3));
        assert_eq!(h.weight_at(&Scalar::from_int(3)).unwrap(), Scalar::zero());
        let m = WeightFamily::meixner(r(1, 1), r(1, 2), tol()).unwrap();
        // (1)_x/x! = 1 for β = 1
        assert_eq!(m.weight_at(&Scalar::from_int(4)).unwrap(), Scalar::ratio(1, 16));
    }

    #[test]
    fn alsalam_weight_matches_infinite_product_form() {
        let f = WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap();
        let q = Scalar::ratio(1, 2);
        let al = Scalar::from_int(-1);
        let inf = |a: &Scalar| q_pochhammer(a, &q, PochLen::Infinite, &tol()).unwrap();
        let norm = &(&inf(&q) * &inf(&al)) * &inf(&(&q / &al));
        for x in [Scalar::one(), Scalar::ratio(1, 8), Scalar::from_int(-1), Scalar::ratio(-1, 4)] {
            let direct = &(&inf(&(&q * &x)) * &inf(&(&(&q * &x) / &al))) / &norm;
            let w = f.weight_at(&x).unwrap();
            assert!((&w - &direct).abs_f64() < 1e-60, "{w} vs {direct}");
            assert!(w.signum() > 0);
        }
    }

    #[test]
    fn little_q_jacobi_weight() {
        let f = WeightFamily::little_q_jacobi(r(1, 1), r(1, 1), r(1, 2), tol()).unwrap();
        // (qx;q)_1 x = (1 − qx) x
        for (s, x) in [(0u32, r(1, 1)), (2, r(1, 4))] {
            let w = f.weight_at_site(&Site::Ladder { branch: Branch::One, s }).unwrap();
            let expect = (RBig::ONE - r(1, 2) * &x) * &x;
            assert!((&w - &rs(&expect)).abs_f64() < 1e-60);
        }
        let g = WeightFamily::little_q_jacobi(r(1, 2), r(-1, 3), r(1, 3), tol()).unwrap();
        let site = Site::Ladder { branch: Branch::One, s: 3 };
        let direct = g.weight_at_site(&site).unwrap();
        let mut acc = g.weight_at_site(&Site::Ladder { branch: Branch::One, s: 0 }).unwrap();
        for s in 0..3 {
            acc = &acc * &g.weight_step(&Site::Ladder { branch: Branch::One, s });
        }
        assert!((&direct - &acc).abs_f64() < 1e-60);
    }

    #[test]
    fn site_lookup() {
        let f = WeightFamily::al_salam_carlitz(r(-1, 2), r(1, 3), tol()).unwrap();
        assert_eq!(f.site_of(&Scalar::ratio(1, 9)).unwrap(), Site::Ladder { branch: Branch::One, s: 2 });
        assert_eq!(f.site_of(&Scalar::ratio(-1, 6)).unwrap(), Site::Ladder { branch: Branch::Alpha, s: 1 });
        assert!(f.site_of(&Scalar::ratio(1, 2)).is_err());
        assert_eq!(f.site_x(&Site::Ladder { branch: Branch::Alpha, s: 2 }).unwrap(), Scalar::ratio(-1, 18));
    }

    #[test]
    fn step_ratios_agree_with_direct_weights() {
        for f in defaults() {
            let b = f.branches();
            for br in b {
                let start = if f.is_linear() { Site::Int(0) } else { Site::Ladder { branch: br, s: 0 } };
                let mut site = start;
                let mut w = f.weight_at_site(&site).unwrap();
                for _ in 0..10 {
                    w = &w * &f.weight_step(&site);
                    site = f.forward(&site);
                    let d = f.weight_at_site(&site).unwrap();
                    assert!((&w - &d).abs_f64() <= 1e-60 * (1.0 + d.abs_f64()), "{}", f.name());
                }
            }
        }
    }

    #[test]
    fn pearson_pairs() {
        let c = WeightFamily::charlier(r(2, 1), tol()).unwrap();
        assert_eq!(c.pearson_pair(), (Poly::x(), Poly::from_ints(&[2, -1])));
        let m = WeightFamily::meixner(r(1, 1), r(1, 2), tol()).unwrap();
        assert_eq!(m.pearson_pair().1, Poly::from_coeffs(vec![Scalar::ratio(1, 2), Scalar::ratio(-1, 2)]));
        let l = WeightFamily::little_q_jacobi(r(0, 1), r(0, 1), r(1, 2), tol()).unwrap();
        let (f, g) = l.pearson_pair();
        assert_eq!(f, Poly::from_ints(&[0, 1, -1]));
        let s = 0.5f64.sqrt();
        assert!((g.coeff(1).to_f64() + s * 1.5).abs() < 1e-15);
        assert!((g.coeff(0).to_f64() - s).abs() < 1e-15);
        for fam in defaults() {
            let (f, g) = fam.pearson_pair();
            assert!(f.degree().unwrap() <= 2 && g.degree().unwrap() <= 1);
        }
    }

    #[test]
    fn pearson_relations_hold() {
        let c = WeightFamily::charlier(r(1, 1), tol()).unwrap();
        assert!(c.verify_pearson(10).unwrap().is_exact_zero());
        let h = WeightFamily::hahn(r(1, 1), r(1, 1), 4, tol()).unwrap();
        assert!(h.verify_pearson(4).unwrap().is_exact_zero());
        let a = WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap();
        assert!(a.verify_pearson(8).unwrap().abs_f64() <= 1e-30);
        for f in defaults() {
            let v = f.verify_pearson(16).unwrap();
            if f.is_linear() {
                assert!(v.is_exact_zero(), "{}", f.name());
            } else {
                assert!(v.abs_f64() <= 1e-30, "{} {}", f.name(), v);
            }
        }
        let odd = WeightFamily::little_q_jacobi(r(1, 2), r(-1, 3), r(1, 3), tol()).unwrap();
        assert!(odd.verify_pearson(16).unwrap().abs_f64() <= 1e-30);
    }

    #[test]
    fn rho_f_vanishes_at_support_ends() {
        let (f, _) = WeightFamily::charlier(r(1, 1), tol()).unwrap().pearson_pair();
        assert!(f.eval(&Scalar::zero()).is_exact_zero());
        let h = WeightFamily::hahn(r(1, 1), r(1, 1), 6, tol()).unwrap();
        let (f, _) = h.pearson_pair();
        assert!(f.eval(&Scalar::zero()).is_exact_zero());
        let top = Scalar::from_int(7);
        assert!((&f.eval(&top) * &h.weight_at(&top).unwrap()).is_exact_zero());
    }

    #[test]
    fn symplectic_weights() {
        let c = WeightFamily::charlier(r(1, 1), tol()).unwrap();
        assert_eq!(c.symplectic_weight_at(&Scalar::zero()).unwrap(), Scalar::one());
        assert_eq!(c.symplectic_weight_at(&Scalar::from_int(2)).unwrap(), Scalar::ratio(1, 2));
        let a = WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap();
        for s in 0..6 {
            for b in [Branch::One, Branch::Alpha] {
                let site = Site::Ladder { branch: b, s };
                let w = a.symplectic_weight_at_site(&site).unwrap();
                let expect = -a.weight_at_site(&site).unwrap();
                assert!((&w - &expect).abs_f64() <= 1e-30);
            }
        }
    }

    #[test]
    fn little_q_jacobi_symplectic_weight_is_shifted_weight() {
        let f = WeightFamily::little_q_jacobi(r(1, 1), r(1, 1), r(1, 2), tol()).unwrap();
        let g = f.lqj_shifted(1, 1).unwrap();
        let q2 = Scalar::ratio(1, 4);
        for s in 0..8 {
            let site = Site::Ladder { branch: Branch::One, s };
            let w = f.symplectic_weight_at_site(&site).unwrap();
            let expect = &q2 * &g.weight_at_site(&site).unwrap();
            assert!((&w - &expect).abs_f64() <= 1e-30);
        }
    }

    #[test]
    fn alsalam_normalisations_and_constants() {
        let a = WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap();
        assert_eq!(a.h_norm(0).unwrap(), Scalar::ratio(1, 2));
        assert_eq!(a.h_norm(1).unwrap(), Scalar::ratio(1, 4));
        assert_eq!(a.c_const(0).unwrap(), Scalar::ratio(-1, 2));
        assert_eq!(a.c_const(1).unwrap(), Scalar::ratio(-3, 8));
    }

    #[test]
    fn recurrence_polynomials() {
        let c = WeightFamily::charlier(r(1, 1), tol()).unwrap();
        let ps = c.classical_ops(2).unwrap();
        assert_eq!(ps[1], Poly::from_ints(&[-1, 1]));
        // Charlier monic: p₂ = x² − (2a+1)x + a²
        assert_eq!(ps[2], Poly::from_ints(&[1, -3, 1]));
        let a = WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), tol()).unwrap();
        let us = a.classical_ops(2).unwrap();
        assert_eq!(us[1], Poly::x());
        // U₂ = x² − (1+α)(1+q)x + α(1−q)
        assert_eq!(us[2], Poly::from_coeffs(vec![Scalar::ratio(-1, 2), Scalar::zero(), Scalar::one()]));
        let m = Measure::new(&a, MeasureKind::Orthogonality, Window::Auto).unwrap();
        assert!(m.integrate(&us[2]).unwrap().abs_f64() < 1e-58);
        let h = WeightFamily::hahn(r(1, 1), r(1, 1), 3, tol()).unwrap();
        assert!(h.classical_ops(4).is_err());
        let l = WeightFamily::little_q_jacobi(r(1, 1), r(1, 1), r(1, 2), tol()).unwrap();
        let ps = l.classical_ops(3).unwrap();
        assert!(ps.iter().all(|p| p.is_monic(0.0) && p.is_exact()));
        let odd = WeightFamily::little_q_jacobi(r(1, 2), r(1, 3), r(1, 2), tol()).unwrap();
        assert!(odd.classical_ops(3).unwrap().iter().all(|p| p.is_monic(1e-30)));
    }

    #[test]
    fn tilde_conversion() {
        let s = Scalar::ratio(1, 2);
        assert_eq!(h_from_tilde(&Scalar::ratio(1, 4), &s), Scalar::ratio(-1, 2));
    }
}
