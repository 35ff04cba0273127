//! Christoffel–Darboux kernels, the matrix kernel of the Pfaffian point
//! process, the parity-split inverse ε of the operator behind 𝒜, kernel
//! relations, and correlation functions by Pfaffian and by enumeration.

use std::sync::Mutex;

use dashu_ratio::RBig;

use crate::error::{Error, Result};
use crate::inner_products::{Measure, MeasureKind, Window};
use crate::polynomials::{apply_a, apply_lattice_operator, Lattice, LatticeOp, Poly};
use crate::scalar_core::Scalar;
use crate::skew_systems::{pfaffian, sop_classical, sop_from_measures, OPSystem, SkewMatrix, SkewOPSystem};
use crate::weights::{Family, Site, WeightFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    UnitaryCD,
    SymplecticCD,
    MatrixKernel,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelValue {
    Scalar(Scalar),
    Matrix([[Scalar; 2]; 2]),
}

#[derive(Clone, Debug)]
pub struct KernelEval {
    pub kind: KernelKind,
    pub n: usize,
    pub x: Scalar,
    pub y: Scalar,
    pub value: KernelValue,
}

/// `K_N(x,y) = Σ_{m<N} p_m(x)p_m(y)/h_m`.
pub fn cd_kernel(opsys: &OPSystem, n: usize, x: &Scalar, y: &Scalar) -> Result<Scalar> {
    if n > opsys.polys.len() {
        return Err(Error::domain(format!("kernel of order {n} needs degrees below {n}, system has {}", opsys.polys.len())));
    }
    Ok((0..n).map(|m| &(&opsys.polys[m].eval(x) * &opsys.polys[m].eval(y)) / &opsys.h[m]).sum())
}

fn check_cover(sys: &SkewOPSystem, n: usize) -> Result<()> {
    if sys.polys.len() < 2 * n || sys.u.len() < n {
        return Err(Error::Coverage(format!("symplectic kernel S_{n} needs Q_0..Q_{}", 2 * n - 1)));
    }
    Ok(())
}

/// `S_N(x,y) = Σ_{i<N} (Q_{2i}(x)Q_{2i+1}(y) − Q_{2i}(y)Q_{2i+1}(x))/u_i`.
pub fn symplectic_kernel(sys: &SkewOPSystem, n: usize, x: &Scalar, y: &Scalar) -> Result<Scalar> {
    check_cover(sys, n)?;
    let q = &sys.polys;
    Ok((0..n)
        .map(|i| {
            let t = &(&q[2 * i].eval(x) * &q[2 * i + 1].eval(y)) - &(&q[2 * i].eval(y) * &q[2 * i + 1].eval(x));
            &t / &sys.u[i]
        })
        .sum())
}

/// `S_N(x,·)` as a polynomial in the second variable.
pub fn symplectic_kernel_in_y(sys: &SkewOPSystem, n: usize, x: &Scalar) -> Result<Poly> {
    check_cover(sys, n)?;
    let q = &sys.polys;
    let mut acc = Poly::zero();
    for i in 0..n {
        let t = &q[2 * i + 1].scale(&q[2 * i].eval(x)) - &q[2 * i].scale(&q[2 * i + 1].eval(x));
        acc = &acc + &t.scale(&sys.u[i].recip());
    }
    Ok(acc)
}

/// `S_N(·,z)` as a polynomial in the first variable.
pub fn symplectic_kernel_in_x(sys: &SkewOPSystem, n: usize, z: &Scalar) -> Result<Poly> {
    Ok(symplectic_kernel_in_y(sys, n, z)?.scale(&Scalar::from_int(-1)))
}

fn lattice_derivative(lattice: &Lattice) -> LatticeOp {
    match lattice {
        Lattice::Linear => LatticeOp::Delta,
        Lattice::Exponential { q, .. } => LatticeOp::Dq(q.clone()),
    }
}

/// `[[S, L_y S], [L_x S, L_x L_y S]]` where `L` is Δ on the linear lattice
/// and `D_q` on the q-ladder.
pub fn matrix_kernel(sys: &SkewOPSystem, n: usize, x: &Scalar, y: &Scalar) -> Result<[[Scalar; 2]; 2]> {
    check_cover(sys, n)?;
    let op = lattice_derivative(sys.family.lattice());
    let q = &sys.polys;
    let mut out: [[Scalar; 2]; 2] = [[Scalar::zero(), Scalar::zero()], [Scalar::zero(), Scalar::zero()]];
    for i in 0..n {
        let (a, b) = (&q[2 * i], &q[2 * i + 1]);
        let (la, lb) = (apply_lattice_operator(&op, a)?, apply_lattice_operator(&op, b)?);
        let pair = |f: &Poly, g: &Poly| &(&f.eval(x) * &g.eval(y)) - &(&f.eval(y) * &g.eval(x));
        let terms = [
            [pair(a, b), &(&a.eval(x) * &lb.eval(y)) - &(&la.eval(y) * &b.eval(x))],
            [&(&la.eval(x) * &b.eval(y)) - &(&a.eval(y) * &lb.eval(x)), pair(&la, &lb)],
        ];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = &out[r][c] + &(&terms[r][c] / &sys.u[i]);
            }
        }
    }
    Ok(out)
}

/// Grid function evaluated at lattice sites.
pub type GridFn<'a> = dyn Fn(&Site) -> Result<Scalar> + 'a;

#[derive(Debug, Clone)]
struct Entry {
    x: Scalar,
    omega: Scalar,
    scale: Scalar,
}

#[derive(Debug)]
struct Ladder {
    entries: Vec<Entry>,
    rho: Scalar,
    len: Option<usize>,
}

/// The parity-split inverse ε of `ℛ = ω(x⁺)T − ω(x)T⁻¹`, with ω = fρ,
/// together with `𝒟 = ε∘s` where `s = ρ` (linear) or `(q−1)xρ` (q-ladder).
#[derive(Debug)]
pub struct EpsilonOperator {
    fam: WeightFamily,
    window: usize,
    f: Poly,
    ladders: Mutex<Vec<Ladder>>,
}

impl EpsilonOperator {
    /// Sites with index `j ≤ window − 3` on an infinite support are interior.
    pub fn new(fam: &WeightFamily, window: usize) -> Result<EpsilonOperator> {
        let (f, _) = fam.pearson_pair();
        let mut ladders = Vec::new();
        for b in fam.branches() {
            let s0 = if fam.is_linear() { Site::Int(0) } else { Site::Ladder { branch: b, s: 0 } };
            let mut rho = fam.weight_at_site(&s0)?;
            if fam.hahn_n().is_none() {
                rho = rho.to_float(fam.prec());
            }
            ladders.push(Ladder { entries: Vec::new(), rho, len: fam.hahn_n().map(|n| n as usize + 1) });
        }
        Ok(EpsilonOperator { fam: fam.clone(), window, f, ladders: Mutex::new(ladders) })
    }

    pub fn family(&self) -> &WeightFamily {
        &self.fam
    }

    pub fn window(&self) -> usize {
        self.window
    }

    fn locate(&self, site: &Site) -> Result<(usize, usize)> {
        match *site {
            Site::Int(i) if self.fam.is_linear() => {
                usize::try_from(i).map(|j| (0, j)).map_err(|_| Error::domain("site below the support"))
            }
            Site::Ladder { branch, s } if !self.fam.is_linear() => {
                let b = self.fam.branches().iter().position(|&x| x == branch).ok_or_else(|| Error::domain("unknown branch"))?;
                Ok((b, s as usize))
            }
            _ => Err(Error::domain("site does not belong to this lattice")),
        }
    }

    fn site(&self, b: usize, j: usize) -> Site {
        if self.fam.is_linear() {
            Site::Int(j as i64)
        } else {
            Site::Ladder { branch: self.fam.branches()[b], s: j as u32 }
        }
    }

    fn entry(&self, b: usize, j: usize) -> Result<Option<Entry>> {
        let mut g = self.ladders.lock().expect("epsilon lock");
        let lad = &mut g[b];
        if let Some(len) = lad.len {
            if j >= len {
                return Ok(None);
            }
        }
        if j >= self.fam.tol().max_terms {
            return Err(Error::convergence("epsilon sum exceeded max_terms lattice points"));
        }
        while lad.entries.len() <= j {
            let k = lad.entries.len();
            let site = self.site(b, k);
            let x = self.fam.site_x(&site)?;
            let omega = &self.f.eval(&x) * &lad.rho;
            let scale = match self.fam.lattice() {
                Lattice::Linear => lad.rho.clone(),
                Lattice::Exponential { q, .. } => &(&(q - &Scalar::one()) * &x) * &lad.rho,
            };
            let mut step = self.fam.weight_step(&site);
            if self.fam.hahn_n().is_none() {
                step = step.to_float(self.fam.prec());
            }
            lad.rho = &lad.rho * &step;
            lad.entries.push(Entry { x, omega, scale });
        }
        Ok(Some(lad.entries[j].clone()))
    }

    fn check_margin(&self, b: usize, j: usize) -> Result<()> {
        let _ = b;
        if self.fam.hahn_n().is_none() && j + 3 > self.window {
            return Err(Error::Margin(format!("site index {j} is within 2 sites of the window edge {}", self.window)));
        }
        Ok(())
    }

    /// `(εφ)(site)`.
    pub fn epsilon_apply(&self, phi: &GridFn<'_>, site: &Site) -> Result<Scalar> {
        let (b, j) = self.locate(site)?;
        self.check_margin(b, j)?;
        self.eps(b, j, &|b, k| phi(&self.site(b, k)))
    }

    fn eps(&self, b: usize, j: usize, phi: &dyn Fn(usize, usize) -> Result<Scalar>) -> Result<Scalar> {
        let m = j / 2;
        if j % 2 == 1 {
            // Σ_{k≤m} ∏_{i=k+1}^m ω(2i) / ∏_{i=k}^m ω(2i+1) · φ(2k)
            let Some(e) = self.entry(b, 2 * m + 1)? else {
                return Err(Error::domain("site outside the support"));
            };
            let mut p = e.omega.recip();
            let mut acc = &p * &phi(b, 2 * m)?;
            for k in (0..m).rev() {
                let num = self.entry(b, 2 * k + 2)?.expect("inside support").omega;
                let den = self.entry(b, 2 * k + 1)?.expect("inside support").omega;
                p = &(&p * &num) / &den;
                acc = &acc + &(&p * &phi(b, 2 * k)?);
            }
            return Ok(acc);
        }
        // −Σ_{k≥m} ∏_{i=m+1}^k ω(2i) / ∏_{i=m}^k ω(2i+1) · φ(2k+1)
        let tol = self.fam.tol().series_tail_tol;
        let mut acc = Scalar::zero();
        let mut p = Scalar::one();
        let mut prev = f64::NAN;
        let mut quiet = 0;
        let mut k = m;
        loop {
            let Some(den) = self.entry(b, 2 * k + 1)? else { break };
            if den.omega.is_exact_zero() {
                break;
            }
            if k > m {
                let num = self.entry(b, 2 * k)?.expect("inside support").omega;
                p = &p * &num;
            }
            p = &p / &den.omega;
            let t = &p * &phi(b, 2 * k + 1)?;
            acc = &acc - &t;
            if self.fam.hahn_n().is_none() {
                let mag = t.abs_f64();
                let r = if prev > 0.0 { mag / prev } else if mag == 0.0 { 0.0 } else { f64::INFINITY };
                let est = if r < 1.0 { mag * r / (1.0 - r) } else { f64::INFINITY };
                if k > m && est <= tol * acc.abs_f64().max(f64::MIN_POSITIVE) {
                    quiet += 1;
                    if quiet >= 3 {
                        return Ok(acc.with_added_err(est, self.fam.prec()));
                    }
                } else {
                    quiet = 0;
                }
                prev = mag;
            }
            k += 1;
        }
        Ok(acc)
    }

    /// `(𝒟φ)(site) = (ε (sφ))(site)`.
    pub fn d_apply(&self, phi: &GridFn<'_>, site: &Site) -> Result<Scalar> {
        let (b, j) = self.locate(site)?;
        self.check_margin(b, j)?;
        self.eps(b, j, &|b, k| match self.entry(b, k)? {
            Some(e) => Ok(&e.scale * &phi(&self.site(b, k))?),
            None => Ok(Scalar::zero()),
        })
    }

    /// `(𝒟p)(site)` for a polynomial `p`.
    pub fn d_apply_poly(&self, p: &Poly, site: &Site) -> Result<Scalar> {
        self.d_apply(&|s: &Site| Ok(p.eval(&self.fam.site_x(s)?)), site)
    }

    /// `(ℛψ)(site) = ω(x⁺)ψ(x⁺) − ω(x)ψ(x⁻)`.
    pub fn r_apply(&self, psi: &GridFn<'_>, site: &Site) -> Result<Scalar> {
        let (b, j) = self.locate(site)?;
        let up = match self.entry(b, j + 1)? {
            Some(e) if !e.omega.is_exact_zero() => &e.omega * &psi(&self.site(b, j + 1))?,
            _ => Scalar::zero(),
        };
        let here = self.entry(b, j)?.ok_or_else(|| Error::domain("site outside the support"))?;
        let down = if j == 0 || here.omega.is_exact_zero() { Scalar::zero() } else { &here.omega * &psi(&self.site(b, j - 1))? };
        Ok(&up - &down)
    }

    /// `(𝒜ψ)(site) = ℛψ / s` on grid values.
    pub fn a_apply(&self, psi: &GridFn<'_>, site: &Site) -> Result<Scalar> {
        let (b, j) = self.locate(site)?;
        let here = self.entry(b, j)?.ok_or_else(|| Error::domain("site outside the support"))?;
        Ok(&self.r_apply(psi, site)? / &here.scale)
    }

    /// Interior sites, spread over the branches.
    pub fn interior_sites(&self, count: usize) -> Vec<Site> {
        interior_sites(&self.fam, self.window, count)
    }
}

/// Free-function form of [`EpsilonOperator::epsilon_apply`].
pub fn epsilon_apply(op: &EpsilonOperator, phi: &GridFn<'_>, site: &Site) -> Result<Scalar> {
    op.epsilon_apply(phi, site)
}

/// `count` distinct sites with index at most `window − 3`, spread over the
/// branches (the whole support for Hahn when it is smaller).
pub fn interior_sites(fam: &WeightFamily, window: usize, count: usize) -> Vec<Site> {
    let branches = fam.branches();
    let top = match fam.hahn_n() {
        Some(n) => n as usize + 1,
        None => window.saturating_sub(2),
    };
    let mut out = Vec::new();
    let mut j = 0;
    while out.len() < count && j < top {
        for &b in &branches {
            if out.len() < count {
                out.push(if fam.is_linear() { Site::Int(j as i64) } else { Site::Ladder { branch: b, s: j as u32 } });
            }
        }
        j += 1;
    }
    out
}

/// Maximum residuals of the two kernel relations over a grid, each divided
/// by the largest value of its left-hand side on the grid.
#[derive(Clone, Debug)]
pub struct KernelRelationReport {
    /// `K_{2N}(x,y) = 𝒜_y S_N(x,y) + c_{2N−1}/(h_{2N}c_{2N−2}) p_{2N}(y)Q_{2N−2}(x)`, with the
    /// unitary kernel summed over `m = 0..2N−1`.
    pub direction_a: f64,
    /// Same with the unitary kernel truncated to `2N−1` terms.
    pub direction_a_short_kernel: f64,
    /// `S_N(x,y) = 𝒟_y K_{2N}(x,y) + c_{2N−1}u_{N−1}/(c_{2N−2}h_{2N}h_{2N−1}) (𝒟p_{2N})(y)(𝒟p_{2N−1})(x)`.
    pub direction_b: f64,
    /// Direction (b) with a minus sign in front of the rank-one term.
    pub direction_b_minus: f64,
    /// Direction (b) with the family-specific rank-one coefficient.
    pub direction_b_family: f64,
}

/// Rank-one coefficients in the family-specific displays (sign included).
fn family_display_coefficient(fam: &WeightFamily, n: usize, ops: &OPSystem) -> Result<Scalar> {
    let h = &ops.h[2 * n - 1];
    let r = |v: &RBig| Scalar::rational(v.clone());
    Ok(match fam.family() {
        Family::Meixner { a, .. } => -(&r(&(RBig::ONE - a)) / h),
        Family::Charlier { .. } => -h.recip(),
        Family::Hahn { alpha, beta, .. } => -(&r(&(alpha + beta + RBig::from(2 * n as i64 + 1))) / h),
        Family::AlSalamCarlitz { q, .. } => {
            let q = r(q);
            let ht = -&(&fam.sqrt_q() * h);
            &q.powi(1 - 2 * n as i64) / &(&(&Scalar::one() - &q) * &ht)
        }
        Family::LittleQJacobi { alpha, beta, q } => {
            let qs = r(q);
            let ht = -&(&fam.sqrt_q() * h);
            let br = crate::weights::bracket_r(&(alpha + beta + RBig::from(2 * n as i64 + 1)), &qs, fam.prec())?;
            -(&(&qs.powi(1 - 2 * n as i64) * &br) / &ht)
        }
    })
}

fn rel(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

/// Both directions of the relation between `K` and `S_N` on `grid`.
pub fn kernel_relation_residual(fam: &WeightFamily, n: usize, grid: &[(Site, Site)], window: usize) -> Result<KernelRelationReport> {
    if n == 0 {
        return Err(Error::domain("kernel relations need N >= 1"));
    }
    let ops = OPSystem::classical(fam, 2 * n)?;
    let sys = sop_classical(fam, 2 * n - 1)?;
    let eps = EpsilonOperator::new(fam, window)?;
    let (f, g) = fam.pearson_pair();
    let lat = fam.lattice();
    let aq: Vec<Poly> = sys.polys.iter().map(|p| apply_a(&f, &g, lat, p)).collect::<Result<_>>()?;
    let c1 = fam.c_const(2 * n - 1)?;
    let c2 = fam.c_const(2 * n - 2)?;
    let coef_a = &c1 / &(&ops.h[2 * n] * &c2);
    let coef_b = &(&c1 * &sys.u[n - 1]) / &(&(&c2 * &ops.h[2 * n]) * &ops.h[2 * n - 1]);
    let coef_fam = family_display_coefficient(fam, n, &ops)?;

    let mut worst = [0.0f64; 5];
    let mut scale = [0.0f64; 3];
    for (sx, sy) in grid {
        let x = fam.site_x(sx)?;
        let y = fam.site_x(sy)?;
        let k_long = cd_kernel(&ops, 2 * n, &x, &y)?;
        let k_short = cd_kernel(&ops, 2 * n - 1, &x, &y)?;
        let mut a_s = Scalar::zero();
        for i in 0..n {
            let t = &(&sys.polys[2 * i].eval(&x) * &aq[2 * i + 1].eval(&y)) - &(&sys.polys[2 * i + 1].eval(&x) * &aq[2 * i].eval(&y));
            a_s = &a_s + &(&t / &sys.u[i]);
        }
        let rank_a = &(&coef_a * &ops.polys[2 * n].eval(&y)) * &sys.polys[2 * n - 2].eval(&x);
        let rhs_a = &a_s + &rank_a;
        worst[0] = worst[0].max((&k_long - &rhs_a).abs_f64());
        worst[1] = worst[1].max((&k_short - &rhs_a).abs_f64());
        scale[0] = scale[0].max(k_long.abs_f64());
        scale[1] = scale[1].max(k_short.abs_f64());

        let s = symplectic_kernel(&sys, n, &x, &y)?;
        let mut dk = Scalar::zero();
        for m in 0..2 * n {
            let d = eps.d_apply_poly(&ops.polys[m], sy)?;
            dk = &dk + &(&(&ops.polys[m].eval(&x) * &d) / &ops.h[m]);
        }
        let rank = &eps.d_apply_poly(&ops.polys[2 * n], sy)? * &eps.d_apply_poly(&ops.polys[2 * n - 1], sx)?;
        worst[2] = worst[2].max((&s - &(&dk + &(&coef_b * &rank))).abs_f64());
        worst[3] = worst[3].max((&s - &(&dk - &(&coef_b * &rank))).abs_f64());
        worst[4] = worst[4].max((&s - &(&dk + &(&coef_fam * &rank))).abs_f64());
        scale[2] = scale[2].max(s.abs_f64());
    }
    Ok(KernelRelationReport {
        direction_a: rel(worst[0], scale[0]),
        direction_a_short_kernel: rel(worst[1], scale[1]),
        direction_b: rel(worst[2], scale[2]),
        direction_b_minus: rel(worst[3], scale[2]),
        direction_b_family: rel(worst[4], scale[2]),
    })
}

/// Grid of `count` site pairs drawn from the interior sites.
pub fn relation_grid(fam: &WeightFamily, window: usize, count: usize) -> Vec<(Site, Site)> {
    let sites = interior_sites(fam, window, 6);
    let mut out = Vec::new();
    'outer: for (i, a) in sites.iter().enumerate() {
        for b in sites.iter().skip(i) {
            if out.len() == count {
                break 'outer;
            }
            out.push((*a, *b));
        }
    }
    out
}

/// Left-inverse residuals of 𝒟 on `p_0..p_4`: `max |𝒜𝒟p − p|` and
/// `max |ℛε(sp) − sp|`, each relative to the largest value involved.
pub fn epsilon_inverse_residual(op: &EpsilonOperator, sites: &[Site]) -> Result<(f64, f64)> {
    let fam = op.family();
    let ops = fam.classical_ops(4)?;
    let (mut ad, mut ad_scale, mut re, mut re_scale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in &ops {
        let dp = |s: &Site| op.d_apply_poly(p, s);
        let sp = |s: &Site| {
            let (b, j) = op.locate(s)?;
            Ok(op.entry(b, j)?.map_or(Scalar::zero(), |e| &e.scale * &p.eval(&e.x)))
        };
        let esp = |s: &Site| op.epsilon_apply(&sp, s);
        for s in sites {
            let x = fam.site_x(s)?;
            let v = p.eval(&x);
            ad = ad.max((&op.a_apply(&dp, s)? - &v).abs_f64());
            ad_scale = ad_scale.max(v.abs_f64());
            let t = sp(s)?;
            re = re.max((&op.r_apply(&esp, s)? - &t).abs_f64());
            re_scale = re_scale.max(t.abs_f64());
        }
    }
    Ok((rel(ad, ad_scale), rel(re, re_scale)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelationMethod {
    Pfaffian,
    BruteForce,
}

#[derive(Clone, Debug)]
pub struct CorrelationResult {
    pub n: usize,
    pub points: Vec<Site>,
    pub value: Scalar,
    pub method: CorrelationMethod,
    pub err_bound: f64,
}

fn check_distinct(points: &[Site]) -> Result<()> {
    for (i, a) in points.iter().enumerate() {
        if points[..i].contains(a) {
            return Err(Error::domain("correlation points must be distinct"));
        }
    }
    Ok(())
}

/// `∏ m(x_l) · Pf[S̃_N(x_i,x_j)]`, with `m` the atom masses of the
/// symplectic measure and the skew-orthogonal system built on the same
/// measure.
pub fn correlation_pfaffian(fam: &WeightFamily, n: usize, points: &[Site], window: Window) -> Result<CorrelationResult> {
    check_distinct(points)?;
    if points.len() > n {
        return Err(Error::domain("more correlation points than particles"));
    }
    let done = |value: Scalar| CorrelationResult {
        n,
        points: points.to_vec(),
        err_bound: value.err_bound(),
        value,
        method: CorrelationMethod::Pfaffian,
    };
    if points.is_empty() {
        return Ok(done(Scalar::one()));
    }
    let sm = Measure::new(fam, MeasureKind::Symplectic, window)?;
    let om = Measure::new(fam, MeasureKind::Orthogonality, window)?;
    let sys = sop_from_measures(&sm, &om, 2 * n - 1)?;
    let xs: Vec<Scalar> = points.iter().map(|s| fam.site_x(s)).collect::<Result<_>>()?;
    let k = points.len();
    let mut blocks = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            blocks[i][j] = Some(matrix_kernel(&sys, n, &xs[i], &xs[j])?);
        }
    }
    let m = SkewMatrix::from_upper(2 * k, |r, c| {
        let b = blocks[r / 2][c / 2].as_ref().expect("upper block");
        Ok(b[r % 2][c % 2].clone())
    })?;
    let mut value = pfaffian(&m)?;
    for s in points {
        value = &value * &sm.mass_at(s)?;
    }
    Ok(done(value))
}

fn interaction(fam: &WeightFamily, xs: &[&Scalar]) -> Scalar {
    let mut acc = Scalar::one();
    for j in 0..xs.len() {
        for k in j + 1..xs.len() {
            let d = xs[j] - xs[k];
            let t = match fam.lattice() {
                Lattice::Linear => &(&d * &d) * &(&(&d * &d) - &Scalar::one()),
                Lattice::Exponential { q, .. } => {
                    &(&(&d * &d) * &(xs[k] - &(q * xs[j]))) * &(xs[j] - &(q * xs[k]))
                }
            };
            acc = &acc * &t;
        }
    }
    acc
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return Ok(());
    }
    loop {
        f(&idx)?;
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return Ok(());
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Maximal number of configurations a brute-force enumeration may visit.
pub const ENUMERATION_LIMIT: f64 = 1e7;

/// Direct enumeration over the first `window` sites of every branch:
/// the sum over completions `x_{k+1} < … < x_N` of the interaction times
/// the atom masses, divided by the same sum with `k = 0`.
///
/// The q-ladder definition averages over all `(N−k)!` orderings and
/// normalises by `τ = (1/N!)·Σ`; for a symmetric integrand that equals the
/// ordered sum used here.
pub fn correlation_bruteforce(fam: &WeightFamily, n: usize, points: &[Site], window: usize) -> Result<CorrelationResult> {
    check_distinct(points)?;
    let k = points.len();
    if k > n {
        return Err(Error::domain("more correlation points than particles"));
    }
    let expected = match fam.hahn_n() {
        Some(big_n) => window.min(big_n as usize + 1),
        None => window * fam.branches().len(),
    };
    if binomial(expected, n) + binomial(expected, n - k) > ENUMERATION_LIMIT {
        return Err(Error::Resource(format!("enumeration over C({expected},{n}) configurations exceeds the limit")));
    }
    let meas = Measure::new(fam, MeasureKind::Symplectic, Window::Restricted(window))?;
    let nodes = meas.nodes(window)?;
    let total = nodes.len();
    let mut fixed_x = Vec::with_capacity(k);
    let mut fixed_mass = Scalar::one();
    for s in points {
        fixed_x.push(fam.site_x(s)?);
        fixed_mass = &fixed_mass * &meas.mass_at(s)?;
    }
    let free: Vec<usize> = (0..total).filter(|&i| !points.contains(&nodes[i].site)).collect();

    let mut tau = Scalar::zero();
    for_each_combination(total, n, |c| {
        let xs: Vec<&Scalar> = c.iter().map(|&i| &nodes[i].x).collect();
        let w = c.iter().fold(interaction(fam, &xs), |acc, &i| &acc * &nodes[i].mass);
        tau = &tau + &w;
        Ok(())
    })?;
    let mut acc = Scalar::zero();
    for_each_combination(free.len(), n - k, |c| {
        let mut xs: Vec<&Scalar> = fixed_x.iter().collect();
        xs.extend(c.iter().map(|&i| &nodes[free[i]].x));
        let w = c.iter().fold(interaction(fam, &xs), |acc, &i| &acc * &nodes[free[i]].mass);
        acc = &acc + &w;
        Ok(())
    })?;
    if tau.value_is_zero() {
        return Err(Error::Singular { order: 2 * n });
    }
    let value = &(&acc * &fixed_mass) / &tau;
    Ok(CorrelationResult { n, points: points.to_vec(), err_bound: value.err_bound(), value, method: CorrelationMethod::BruteForce })
}

/// Reproducing property `⟨S_N(x,·), S_N(·,z)⟩ = −S_N(x,z)`.
#[derive(Clone, Debug)]
pub struct ReproducingResidual {
    pub inner: Scalar,
    pub kernel: Scalar,
    /// `|inner + S_N(x,z)| / max(1, |S_N(x,z)|)`.
    pub residual: f64,
    /// The same with `inner` compared to `+S_N(x,z)`.
    pub residual_plus: f64,
}

pub fn reproducing_residual(sys: &SkewOPSystem, n: usize, x: &Scalar, z: &Scalar, measure: &Measure) -> Result<ReproducingResidual> {
    let phi = symplectic_kernel_in_y(sys, n, x)?;
    let psi = symplectic_kernel_in_x(sys, n, z)?;
    let inner = measure.skew(&phi, &psi)?;
    let kernel = symplectic_kernel(sys, n, x, z)?;
    let scale = kernel.abs_f64().max(1.0);
    Ok(ReproducingResidual {
        residual: (&inner + &kernel).abs_f64() / scale,
        residual_plus: (&inner - &kernel).abs_f64() / scale,
        inner,
        kernel,
    })
}

/// `∏_{j<k}(x_j−x_k)²(x_j−qx_k)(q⁻¹x_k−x_j)`.
fn delta_q4(xs: &[&Scalar], q: &Scalar) -> Scalar {
    let qi = q.recip();
    let mut acc = Scalar::one();
    for j in 0..xs.len() {
        for k in j + 1..xs.len() {
            let d = xs[j] - xs[k];
            let t = &(&(&d * &d) * &(xs[j] - &(q * xs[k]))) * &(&(&qi * xs[k]) - xs[j]);
            acc = &acc * &t;
        }
    }
    acc
}

/// Residuals of the multiple Jackson-integral representation of
/// `Q_{2n}` and `Q_{2n+1}` at `x`, relative to `max(1, |Q(x)|)`.
#[derive(Clone, Debug)]
pub struct QIntegralResidual {
    pub even: f64,
    pub odd: f64,
    /// Constant in the odd representation that reproduces the γ-gauge.
    pub c: Scalar,
}

pub fn q_integral_rep_residual(fam: &WeightFamily, n: usize, x: &Scalar, window: Window) -> Result<QIntegralResidual> {
    let Some(q) = fam.q() else {
        return Err(Error::domain("the q-integral representation needs a q-ladder family"));
    };
    if n == 0 {
        return Ok(QIntegralResidual { even: 0.0, odd: 0.0, c: Scalar::zero() });
    }
    if n > 2 {
        return Err(Error::domain("q-integral representation is enumerated for n <= 2 only"));
    }
    let sys = sop_classical(fam, 2 * n + 1)?;
    let meas = Measure::new(fam, MeasureKind::Symplectic, window)?;
    let degree = 2 * n + 1 + 2 * n * (n - 1);
    let bound = Poly::from_coeffs(vec![Scalar::one(); degree + 1]).scale(&(&Scalar::one() + &x.abs()).powi(degree as i64));
    let (nodes, tail) = meas.nodes_for(&bound)?;
    let total = nodes.len();
    if (total as f64).powi(n as i32) > ENUMERATION_LIMIT {
        return Err(Error::Resource(format!("{total}^{n} configurations exceed the enumeration limit")));
    }
    let one_plus_q = &Scalar::one() + &q;
    let mut even = Poly::zero();
    let mut odd = Poly::zero();
    let mut tau = Scalar::zero();
    let mut idx = vec![0usize; n];
    loop {
        let xs: Vec<&Scalar> = idx.iter().map(|&i| &nodes[i].x).collect();
        let w = idx.iter().fold(delta_q4(&xs, &q), |acc, &i| &acc * &nodes[i].mass);
        if !w.is_exact_zero() {
            let mut prod = Poly::one();
            let mut sum = Scalar::zero();
            for xi in &xs {
                prod = &prod * &(&Poly::linear_root(xi) * &Poly::linear_root(&(&q * *xi)));
                sum = &sum + *xi;
            }
            even = &even + &prod.scale(&w);
            let lin = Poly::from_coeffs(vec![&one_plus_q * &sum, Scalar::one()]);
            odd = &odd + &(&lin * &prod).scale(&w);
            tau = &tau + &w;
        }
        let Some(p) = (0..n).rev().find(|&p| idx[p] + 1 < total) else { break };
        idx[p] += 1;
        for j in p + 1..n {
            idx[j] = 0;
        }
    }
    let tau_inv = tau.with_added_err(tail, fam.prec()).recip();
    let even = even.scale(&tau_inv);
    let odd = odd.scale(&tau_inv);
    let c = &sys.polys[2 * n + 1].coeff(2 * n) - &odd.coeff(2 * n);
    let odd = &odd + &even.scale(&c);
    let qe = sys.polys[2 * n].eval(x);
    let qo = sys.polys[2 * n + 1].eval(x);
    Ok(QIntegralResidual {
        even: (&even.eval(x) - &qe).abs_f64() / qe.abs_f64().max(1.0),
        odd: (&odd.eval(x) - &qo).abs_f64() / qo.abs_f64().max(1.0),
        c,
    })
}

/// Both sides of
/// `∏_{j<k}(x_j−x_k)²(x_j−q⁻¹x_k)(x_j−qx_k) = (−q)^{−C(n,2)} ∏_{j<k}(x_j−x_k)²(x_k−qx_j)(x_j−qx_k)`.
pub fn q4b_sides(xs: &[RBig], q: &RBig) -> (RBig, RBig) {
    let n = xs.len();
    let qi = RBig::ONE / q;
    let mut lhs = RBig::ONE;
    let mut rhs = RBig::ONE;
    for j in 0..n {
        for k in j + 1..n {
            let d = &xs[j] - &xs[k];
            let d2 = &d * &d;
            lhs = lhs * &d2 * (&xs[j] - &qi * &xs[k]) * (&xs[j] - q * &xs[k]);
            rhs = rhs * &d2 * (&xs[k] - q * &xs[j]) * (&xs[j] - q * &xs[k]);
        }
    }
    let pairs = n * n.saturating_sub(1) / 2;
    let mut pre = RBig::ONE;
    for _ in 0..pairs {
        pre = pre * (-(&qi));
    }
    (lhs, pre * rhs)
}
