//! Discrete measures on the lattice, Jackson integrals, and the symmetric
//! and skew-symmetric inner products built on them.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::polynomials::{apply_lattice_operator, Lattice, LatticeOp, Poly};
use crate::scalar_core::{Scalar, TolerancePolicy};
use crate::weights::{Branch, Site, WeightFamily};

/// Which weight the measure carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    /// ρ, the orthogonality weight.
    Orthogonality,
    /// ω, the symplectic weight `f(x+1)ρ(x+1)` or `f(qx)ρ(qx)`.
    Symplectic,
}

/// How much of an infinite support is used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Extend until the tail bound is below `series_tail_tol`.
    Auto,
    /// Exactly `W` points per branch; the bounded tail is added to `err`.
    Points(usize),
    /// The measure restricted to `W` points per branch, with no tail.
    Restricted(usize),
}

/// Default starting windows for infinite supports.
pub const LINEAR_WINDOW: usize = 40;
pub const LADDER_WINDOW: usize = 48;

/// One atom of a discrete measure.
#[derive(Clone, Debug)]
pub struct Node {
    pub site: Site,
    pub x: Scalar,
    pub mass: Scalar,
}

#[derive(Debug)]
struct BranchState {
    nodes: Vec<Node>,
    cur: Site,
    rho_cur: Scalar,
    finite_len: Option<usize>,
}

/// A family's weight as a list of atoms per branch, generated lazily.
///
/// On the exponential lattice the atoms carry the Jackson factor
/// `(1−q)|x|`, so that the α-branch of Al-Salam–Carlitz enters with the
/// orientation of `∫_α^1 = ∫_0^1 − ∫_0^α`.
#[derive(Debug)]
pub struct Measure {
    fam: WeightFamily,
    kind: MeasureKind,
    window: Window,
    f: Poly,
    branches: Mutex<Vec<(Branch, BranchState)>>,
    moments: Mutex<Vec<Scalar>>,
}

impl Clone for Measure {
    fn clone(&self) -> Self {
        Measure::new(&self.fam, self.kind, self.window).expect("already validated")
    }
}

impl Measure {
    pub fn new(fam: &WeightFamily, kind: MeasureKind, window: Window) -> Result<Measure> {
        if let Window::Points(0) | Window::Restricted(0) = window {
            return Err(Error::domain("window must be at least 1"));
        }
        let (f, _) = fam.pearson_pair();
        let mut branches = Vec::new();
        for b in fam.branches() {
            let cur = if fam.is_linear() { Site::Int(0) } else { Site::Ladder { branch: b, s: 0 } };
            let mut rho_cur = fam.weight_at_site(&cur)?;
            if !fam.is_linear() {
                rho_cur = rho_cur.to_float(fam.prec());
            }
            let finite_len = fam.hahn_n().map(|n| match kind {
                MeasureKind::Orthogonality => n as usize + 1,
                MeasureKind::Symplectic => n as usize,
            });
            branches.push((b, BranchState { nodes: Vec::new(), cur, rho_cur, finite_len }));
        }
        Ok(Measure { fam: fam.clone(), kind, window, f, branches: Mutex::new(branches), moments: Mutex::new(Vec::new()) })
    }

    pub fn family(&self) -> &WeightFamily {
        &self.fam
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn window(&self) -> Window {
        self.window
    }

    fn tol(&self) -> &TolerancePolicy {
        self.fam.tol()
    }

    fn jacobian(&self, x: &Scalar) -> Scalar {
        match self.fam.lattice() {
            Lattice::Linear => Scalar::one(),
            Lattice::Exponential { q, .. } => &(&Scalar::one() - q) * &x.abs(),
        }
    }

    fn push_node(&self, st: &mut BranchState) -> Result<()> {
        let fam = &self.fam;
        let site = st.cur;
        let x = fam.site_x(&site)?;
        let mut step = fam.weight_step(&site);
        if !fam.is_linear() {
            step = step.to_float(fam.prec());
        }
        let rho_next = &st.rho_cur * &step;
        let next = fam.forward(&site);
        let w = match self.kind {
            MeasureKind::Orthogonality => st.rho_cur.clone(),
            MeasureKind::Symplectic => &self.f.eval(&fam.site_x(&next)?) * &rho_next,
        };
        let mass = &self.jacobian(&x) * &w;
        let x = if fam.is_linear() { x } else { x.to_float(fam.prec()) };
        st.nodes.push(Node { site, x, mass });
        st.cur = next;
        st.rho_cur = rho_next;
        Ok(())
    }

    fn ensure(&self, st: &mut BranchState, n: usize) -> Result<()> {
        if n > self.tol().max_terms {
            return Err(Error::convergence("tail bound not met within max_terms lattice points"));
        }
        while st.nodes.len() < n {
            self.push_node(st)?;
        }
        Ok(())
    }

    /// Upper bound on `Σ_{nodes ≥ w} |P·mass|` on one branch.
    fn tail_bound(&self, st: &mut BranchState, w: usize, p: &Poly) -> Result<f64> {
        if let Some(len) = st.finite_len {
            return Ok(if w >= len { 0.0 } else { f64::INFINITY });
        }
        self.ensure(st, w + 1)?;
        let next = &st.nodes[w];
        let m_next = next.mass.abs_f64() + next.mass.err_bound();
        if m_next == 0.0 {
            return Ok(0.0);
        }
        let m_last = if w > 0 { st.nodes[w - 1].mass.abs_f64() } else { 0.0 };
        let obs = if m_last > 0.0 { m_next / m_last } else { f64::INFINITY };
        let ratio = obs.max(self.fam.tail_ratio_limit());
        let big_x = next.x.abs_f64();
        let coeffs = p.abs_coeffs();
        let b: f64 = coeffs.iter().enumerate().map(|(k, c)| c * big_x.powi(k as i32)).sum();
        let growth = if self.fam.is_linear() && big_x >= 1.0 {
            ((big_x + 1.0) / big_x).powi(p.degree().unwrap_or(0) as i32)
        } else {
            1.0
        };
        let r = ratio * growth;
        if !(r < 1.0) || !r.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(2.0 * b.max(f64::MIN_POSITIVE) * m_next / (1.0 - r))
    }

    /// Number of nodes to use on a branch for integrand `p`, and the tail
    /// error to add.
    fn plan(&self, st: &mut BranchState, p: &Poly) -> Result<(usize, f64)> {
        if let Some(len) = st.finite_len {
            let w = match self.window {
                Window::Auto => len,
                Window::Points(w) | Window::Restricted(w) => w.min(len),
            };
            let t = if matches!(self.window, Window::Restricted(_)) { 0.0 } else { self.tail_bound(st, w, p)? };
            return Ok((w, t));
        }
        match self.window {
            Window::Restricted(w) => Ok((w, 0.0)),
            Window::Points(w) => Ok((w, self.tail_bound(st, w, p)?)),
            Window::Auto => {
                let mut w = if self.fam.is_linear() { LINEAR_WINDOW } else { LADDER_WINDOW };
                let tol = self.tol().series_tail_tol;
                loop {
                    let t = self.tail_bound(st, w, p)?;
                    if t <= tol {
                        return Ok((w, t));
                    }
                    w += w / 4 + 8;
                }
            }
        }
    }

    /// The atoms that an integrand bounded by `p` is summed over, one list
    /// per branch, together with the tail error bound.
    pub fn nodes_for(&self, p: &Poly) -> Result<(Vec<Node>, f64)> {
        let mut g = self.branches.lock().expect("measure lock");
        let mut out = Vec::new();
        let mut err = 0.0;
        for (_, st) in g.iter_mut() {
            let (w, t) = self.plan(st, p)?;
            self.ensure(st, w)?;
            out.extend(st.nodes[..w].iter().cloned());
            err += t;
        }
        Ok((out, err))
    }

    /// The first `w` atoms of every branch.
    pub fn nodes(&self, w: usize) -> Result<Vec<Node>> {
        let mut g = self.branches.lock().expect("measure lock");
        let mut out = Vec::new();
        for (_, st) in g.iter_mut() {
            let n = st.finite_len.map_or(w, |l| l.min(w));
            self.ensure(st, n)?;
            out.extend(st.nodes[..n].iter().cloned());
        }
        Ok(out)
    }

    /// Mass of the atom at `site`, zero outside a restricted window.
    pub fn mass_at(&self, site: &Site) -> Result<Scalar> {
        if let Window::Restricted(w) = self.window {
            let idx = match *site {
                Site::Int(i) => i,
                Site::Ladder { s, .. } => s as i64,
            };
            if idx < 0 || idx >= w as i64 {
                return Ok(Scalar::zero());
            }
        }
        let fam = &self.fam;
        let x = fam.site_x(site)?;
        let w = match self.kind {
            MeasureKind::Orthogonality => fam.weight_at_site(site)?,
            MeasureKind::Symplectic => fam.symplectic_weight_at_site(site)?,
        };
        let m = &self.jacobian(&x) * &w;
        Ok(if fam.is_linear() { m } else { m.to_float(fam.prec()) })
    }

    /// `∫ x^k dμ`.
    pub fn moment(&self, k: usize) -> Result<Scalar> {
        {
            let m = self.moments.lock().expect("moment lock");
            if let Some(v) = m.get(k) {
                return Ok(v.clone());
            }
        }
        let start = self.moments.lock().expect("moment lock").len();
        let mut fresh = Vec::new();
        for j in start..=k {
            fresh.push(self.sum_pointwise(&Poly::monomial(j), |n| Ok(n.x.powi(j as i64)))?);
        }
        let mut m = self.moments.lock().expect("moment lock");
        if m.len() == start {
            m.extend(fresh);
        }
        Ok(m[k].clone())
    }

    /// `∫ P dμ`, summed atom by atom with a tail bound fitted to `P`.
    pub fn integrate(&self, p: &Poly) -> Result<Scalar> {
        if p.is_zero() {
            return Ok(Scalar::zero());
        }
        self.sum_pointwise(p, |n| Ok(p.eval(&n.x)))
    }

    /// `Σ g(node)·mass`, where `|g(x)| ≤ Σ|b_k||x|^k` for the coefficients of
    /// `bound`; the tail estimate uses `bound`.
    pub fn sum_pointwise<F>(&self, bound: &Poly, g: F) -> Result<Scalar>
    where
        F: Fn(&Node) -> Result<Scalar>,
    {
        let (nodes, tail) = self.nodes_for(bound)?;
        let mut acc = Scalar::zero();
        for n in &nodes {
            if n.mass.is_exact_zero() {
                continue;
            }
            acc = &acc + &(&g(n)? * &n.mass);
        }
        Ok(acc.with_added_err(tail, self.fam.prec()))
    }

    /// ⟨φ, ψ⟩ on this measure (symmetric).
    pub fn sym(&self, phi: &Poly, psi: &Poly) -> Result<Scalar> {
        self.integrate(&(phi * psi))
    }

    /// Skew form ⟨φ, ψ⟩ with this measure as ω.
    pub fn skew(&self, phi: &Poly, psi: &Poly) -> Result<Scalar> {
        self.integrate(&skew_integrand(phi, psi, self.fam.lattice())?)
    }
}

/// `φ Tψ − Tφ ψ` (linear) or `φ D_qψ − ψ D_qφ` (exponential).
pub fn skew_integrand(phi: &Poly, psi: &Poly, lattice: &Lattice) -> Result<Poly> {
    match lattice {
        Lattice::Linear => {
            let tp = apply_lattice_operator(&LatticeOp::ShiftT, psi)?;
            let tf = apply_lattice_operator(&LatticeOp::ShiftT, phi)?;
            Ok(&(phi * &tp) - &(&tf * psi))
        }
        Lattice::Exponential { q, .. } => {
            let dp = apply_lattice_operator(&LatticeOp::Dq(q.clone()), psi)?;
            let df = apply_lattice_operator(&LatticeOp::Dq(q.clone()), phi)?;
            Ok(&(phi * &dp) - &(psi * &df))
        }
    }
}

/// Interval of a Jackson integral.
#[derive(Clone, Debug, PartialEq)]
pub enum Interval {
    ZeroToOne,
    ZeroToA(Scalar),
    /// `∫_α^1 = ∫_0^1 − ∫_0^α`.
    AlphaToOne(Scalar),
}

/// Integrand of a Jackson integral.
pub enum Integrand<'a> {
    Poly(&'a Poly),
    Fn(&'a dyn Fn(&Scalar) -> Result<Scalar>),
}

fn check_q(q: &Scalar) -> Result<()> {
    let v = q.to_f64();
    if (q.is_exact() && q.signum() > 0 && (q - &Scalar::one()).signum() < 0) || (!q.is_exact() && v > 0.0 && v < 1.0) {
        Ok(())
    } else {
        Err(Error::domain("q must lie in (0,1)"))
    }
}

/// `∫_0^a φ d_qx = (1−q) Σ a qⁿ φ(a qⁿ)`.
pub fn jackson_integral(phi: Integrand<'_>, interval: &Interval, q: &Scalar, tol: &TolerancePolicy) -> Result<Scalar> {
    check_q(q)?;
    match interval {
        Interval::ZeroToOne => jackson_zero_to(&phi, &Scalar::one(), q, tol),
        Interval::ZeroToA(a) => jackson_zero_to(&phi, a, q, tol),
        Interval::AlphaToOne(al) => {
            let top = jackson_zero_to(&phi, &Scalar::one(), q, tol)?;
            let bottom = jackson_zero_to(&phi, al, q, tol)?;
            Ok(&top - &bottom)
        }
    }
}

fn jackson_zero_to(phi: &Integrand<'_>, a: &Scalar, q: &Scalar, tol: &TolerancePolicy) -> Result<Scalar> {
    let one = Scalar::one();
    let oq = &one - q;
    match phi {
        Integrand::Poly(p) => {
            // ∫_0^a x^k d_qx = (1−q) a^{k+1} / (1 − q^{k+1})
            let mut acc = Scalar::zero();
            for (k, c) in p.coeffs().iter().enumerate() {
                let e = k as i64 + 1;
                acc = &acc + &(&(c * &a.powi(e)) * &(&oq / &(&one - &q.powi(e))));
            }
            Ok(acc)
        }
        Integrand::Fn(f) => {
            let prec = tol.precision_bits;
            // exact abscissae when possible, so lattice-aware integrands can locate them
            let (qf, mut x) = if a.is_exact() && q.is_exact() { (q.clone(), a.clone()) } else { (q.to_float(prec), a.to_float(prec)) };
            let mut acc = Scalar::zero();
            let mut prev = f64::NAN;
            let mut quiet = 0;
            for n in 0..tol.max_terms {
                let t = &(&oq * &x) * &f(&x)?;
                let tv = t.abs_f64() + t.err_bound();
                acc = &acc + &t;
                x = &x * &qf;
                if n >= 8 {
                    if tv == 0.0 {
                        quiet += 1;
                        if quiet >= 8 {
                            return Ok(acc);
                        }
                    } else {
                        quiet = 0;
                        let r = tv / prev;
                        if r < 1.0 {
                            let tail = 2.0 * tv * r / (1.0 - r);
                            if tail <= tol.series_tail_tol {
                                return Ok(acc.with_added_err(tail, prec));
                            }
                        }
                    }
                }
                prev = tv;
            }
            Err(Error::convergence("jackson integral tail bound not met within max_terms"))
        }
    }
}

/// Symmetric inner product `Σ φψρ` or `∫ φψρ d_qx`.
pub fn sym_inner(phi: &Poly, psi: &Poly, fam: &WeightFamily, window: Window) -> Result<Scalar> {
    Measure::new(fam, MeasureKind::Orthogonality, window)?.sym(phi, psi)
}

/// Skew inner product with ω the family's symplectic weight.
pub fn skew_inner(phi: &Poly, psi: &Poly, fam: &WeightFamily, window: Window) -> Result<Scalar> {
    Measure::new(fam, MeasureKind::Symplectic, window)?.skew(phi, psi)
}

/// Skew inner product evaluated node by node from the defining sum, not
/// through the symbolic integrand.
pub fn skew_inner_pointwise(phi: &Poly, psi: &Poly, measure: &Measure) -> Result<Scalar> {
    let fam = measure.family();
    let bound = skew_integrand(phi, psi, fam.lattice())?;
    match fam.lattice().clone() {
        Lattice::Linear => measure.sum_pointwise(&bound, |n| {
            let x1 = &n.x + &Scalar::one();
            Ok(&(&phi.eval(&n.x) * &psi.eval(&x1)) - &(&phi.eval(&x1) * &psi.eval(&n.x)))
        }),
        Lattice::Exponential { q, .. } => measure.sum_pointwise(&bound, |n| {
            let qx = &q * &n.x;
            let den = &(&Scalar::one() - &q) * &n.x;
            let dpsi = &(&psi.eval(&n.x) - &psi.eval(&qx)) / &den;
            let dphi = &(&phi.eval(&n.x) - &phi.eval(&qx)) / &den;
            Ok(&(&phi.eval(&n.x) * &dpsi) - &(&psi.eval(&n.x) * &dphi))
        }),
    }
}

/// Skew moment `⟨x^i, x^j⟩`.
pub fn moment_entry(fam: &WeightFamily, i: usize, j: usize, window: Window) -> Result<Scalar> {
    skew_inner(&Poly::monomial(i), &Poly::monomial(j), fam, window)
}

/// Skew moment on the exponential lattice through
/// `([j]_q − [i]_q) ∫ x^{i+j−1} ω d_qx`.
pub fn moment_entry_shortcut(measure: &Measure, i: usize, j: usize) -> Result<Scalar> {
    let Lattice::Exponential { q, .. } = measure.family().lattice() else {
        return Err(Error::domain("the bracket shortcut applies to the exponential lattice"));
    };
    if i + j == 0 {
        return Ok(Scalar::zero());
    }
    let br = &crate::scalar_core::q_bracket(j as i64, q)? - &crate::scalar_core::q_bracket(i as i64, q)?;
    Ok(&br * &measure.moment(i + j - 1)?)
}
