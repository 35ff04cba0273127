//! The invariant battery behind `skewlat verify`.
//!
//! Every check yields one row: a residual, the tolerance it is held to, and
//! whether it gates the exit status. Diagnostic rows record comparisons
//! against alternative normalisations or signs and never gate.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use skewlat::inner_products::{Measure, MeasureKind, Window};
use skewlat::kernels::{
    correlation_bruteforce, correlation_pfaffian, epsilon_inverse_residual, interior_sites, kernel_relation_residual,
    matrix_kernel, q4b_sides, q_integral_rep_residual, relation_grid, reproducing_residual, symplectic_kernel,
    EpsilonOperator,
};
use skewlat::scalar_core::Rational;
use skewlat::skew_systems::{
    al_salam_carlitz_tau_closed_form, c_via_operator, moment_matrix, op_from_moments, pfaffian, sop_classical,
    sop_explicit, sop_from_moments, tridiagonal_action,
};
use skewlat::{Branch, OPSystem, Result, Scalar, Site, SkewOPSystem, TolerancePolicy, WeightFamily};

use crate::args::{FamilyName, VerifyArgs};
use crate::commands::{policy, CliResult, FamilySpec};
use crate::json::{self, f64_str};
use crate::{EXIT_CHECKS_FAILED, EXIT_OK};

/// Skew-orthogonality and `u = c` on the float backend.
pub const SKEW_TOL: f64 = 1e-20;
/// Normalisations from moments against their closed forms.
pub const NORM_TOL: f64 = 1e-20;
/// Pfaffian minors of the moment matrix.
pub const TAU_TOL: f64 = 1e-25;
/// Pfaffian against enumeration on the float backend.
pub const CORRELATION_TOL: f64 = 1e-15;

#[derive(Clone, Debug)]
pub struct Check {
    pub family: String,
    pub name: String,
    pub residual: Option<f64>,
    pub tolerance: f64,
    pub gating: bool,
    pub error: Option<String>,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.residual.is_some_and(|r| r <= self.tolerance)
    }

    fn status(&self) -> &'static str {
        match (self.gating, self.passed()) {
            (false, _) => "diagnostic",
            (true, true) => "pass",
            (true, false) => "fail",
        }
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("family".into(), self.family.clone().into());
        m.insert("check".into(), self.name.clone().into());
        m.insert("residual".into(), self.residual.map_or(Value::Null, |r| f64_str(r).into()));
        m.insert("tolerance".into(), f64_str(self.tolerance).into());
        m.insert("status".into(), self.status().into());
        if let Some(e) = &self.error {
            m.insert("error".into(), e.clone().into());
        }
        Value::Object(m)
    }
}

struct Battery {
    family: String,
    checks: Vec<Check>,
}

impl Battery {
    fn new(family: &str) -> Self {
        Battery { family: family.into(), checks: Vec::new() }
    }

    fn push(&mut self, name: &str, tolerance: f64, gating: bool, r: Result<f64>) {
        let (residual, error) = match r {
            Ok(v) if v.is_nan() => (None, Some("residual is NaN".to_string())),
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        self.checks.push(Check { family: self.family.clone(), name: name.into(), residual, tolerance, gating, error });
    }

    fn gate(&mut self, name: &str, tolerance: f64, r: Result<f64>) {
        self.push(name, tolerance, true, r);
    }

    fn diag(&mut self, name: &str, tolerance: f64, r: Result<f64>) {
        self.push(name, tolerance, false, r);
    }
}

fn rel(a: &Scalar, b: &Scalar) -> f64 {
    let d = (a - b).abs_f64();
    if d == 0.0 {
        0.0
    } else {
        d / b.abs_f64().max(f64::MIN_POSITIVE)
    }
}

fn worst<I: IntoIterator<Item = Result<f64>>>(it: I) -> Result<f64> {
    it.into_iter().try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

fn is_exact(fam: &WeightFamily) -> bool {
    fam.hahn_n().is_some()
}

/// Point sets for the correlation comparison.
pub fn correlation_point_sets(fam: &WeightFamily) -> Vec<Vec<Site>> {
    let s = |j: i64| if fam.is_linear() { Site::Int(j) } else { Site::Ladder { branch: Branch::One, s: j as u32 } };
    let mut sets = vec![vec![s(0)], vec![s(1)], vec![s(3)], vec![s(0), s(2)], vec![s(1), s(4)], vec![s(2), s(5)]];
    if fam.branches().len() == 2 {
        let a = |j: u32| Site::Ladder { branch: Branch::Alpha, s: j };
        sets.push(vec![s(0), a(1)]);
        sets.push(vec![a(2)]);
    }
    sets
}

pub fn correlation_window(fam: &WeightFamily) -> usize {
    if fam.is_linear() {
        20
    } else {
        24
    }
}

fn family_battery(fam: &WeightFamily) -> Vec<Check> {
    let mut b = Battery::new(fam.name());
    let itol = fam.tol().identity_tol;
    let exact = is_exact(fam);
    let pick = |float_tol: f64| if exact { 0.0 } else { float_tol };

    b.gate("pearson", pick(itol), fam.verify_pearson(20).map(|r| r.abs_f64() + r.err_bound()));

    let h_moments = op_from_moments(fam, 6, Window::Auto);
    b.gate(
        "norms_from_moments",
        pick(NORM_TOL),
        h_moments.as_ref().map_err(Clone::clone).and_then(|ops| worst((0..=6).map(|n| Ok(rel(&ops.h[n], &fam.h_norm(n)?))))),
    );
    if fam.name() == "littleqjacobi" {
        b.diag(
            "norms_from_moments_printed_prefactor",
            NORM_TOL,
            h_moments.as_ref().map_err(Clone::clone).and_then(|ops| worst((0..=6).map(|n| Ok(rel(&ops.h[n], &fam.h_norm_printed(n)?))))),
        );
    }

    let meas = Measure::new(fam, MeasureKind::Symplectic, Window::Auto);
    let mut systems: Vec<(&str, Result<SkewOPSystem>)> =
        vec![("moments", sop_from_moments(fam, 8, Window::Auto)), ("classical", sop_classical(fam, 8))];
    if !fam.is_linear() {
        systems.push(("explicit", sop_explicit(fam, 8)));
    }
    for (label, sys) in &systems {
        let res = match (sys, &meas) {
            (Ok(s), Ok(m)) => s.residual(m).map(|(r, _)| r),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        b.gate(&format!("skew_orthogonality_{label}"), pick(SKEW_TOL), res);
        let uc = sys.as_ref().map_err(Clone::clone).and_then(|s| {
            worst(s.u.iter().enumerate().map(|(m, u)| Ok(rel(u, &fam.c_const(2 * m)?))))
        });
        b.gate(&format!("u_equals_c_{label}"), pick(SKEW_TOL), uc);
    }

    let ops7 = OPSystem::classical(fam, 7);
    let (cv, band) = match &ops7 {
        Ok(ops) => (
            worst((0..=6).map(|n| Ok(rel(&c_via_operator(fam, n, ops)?, &fam.c_const(n)?)))),
            worst((0..=6).map(|n| {
                let act = tridiagonal_action(fam, n, ops)?;
                let scale = act.coeffs.iter().map(Scalar::abs_f64).fold(1.0, f64::max);
                Ok(act.off_band / scale)
            })),
        ),
        Err(e) => (Err(e.clone()), Err(e.clone())),
    };
    b.gate("c_via_operator", pick(itol), cv);
    b.gate("tridiagonal_band", pick(itol), band);

    let mm = moment_matrix(fam, 8, Window::Auto);
    let tau_prod = |n: usize| -> Result<Scalar> {
        (0..n).try_fold(Scalar::one(), |acc, i| Ok(&acc * &fam.c_const(2 * i)?))
    };
    b.gate(
        "tau_equals_product_of_c",
        pick(TAU_TOL),
        mm.as_ref().map_err(Clone::clone).and_then(|m| worst((1..=4).map(|n| Ok(rel(&pfaffian(&m.leading(2 * n))?, &tau_prod(n)?))))),
    );
    if fam.name() == "alsalamcarlitz" {
        b.diag(
            "tau_printed_closed_form",
            TAU_TOL,
            mm.as_ref().map_err(Clone::clone).and_then(|m| {
                worst((1..=4).map(|n| Ok(rel(&pfaffian(&m.leading(2 * n))?, &al_salam_carlitz_tau_closed_form(fam, n)?))))
            }),
        );
    }

    let grid = relation_grid(fam, 20, 10);
    for n in 1..=2 {
        let rep = kernel_relation_residual(fam, n, &grid, 20);
        let field = |f: fn(&skewlat::kernels::KernelRelationReport) -> f64| rep.as_ref().map(f).map_err(Clone::clone);
        b.gate(&format!("kernel_relation_a_N{n}"), pick(itol), field(|r| r.direction_a));
        b.gate(&format!("kernel_relation_b_N{n}"), itol, field(|r| r.direction_b));
        b.diag(&format!("kernel_relation_a_short_kernel_N{n}"), itol, field(|r| r.direction_a_short_kernel));
        b.diag(&format!("kernel_relation_b_minus_sign_N{n}"), itol, field(|r| r.direction_b_minus));
        b.diag(&format!("kernel_relation_b_family_display_N{n}"), itol, field(|r| r.direction_b_family));
    }

    let sys3 = sop_classical(fam, 3);
    let pts = interior_sites(fam, 10, 5);
    let xs: Result<Vec<Scalar>> = pts.iter().map(|s| fam.site_x(s)).collect();
    for n in 1..=2 {
        let anti = match (&sys3, &xs) {
            (Ok(sys), Ok(xs)) => worst(xs.iter().enumerate().flat_map(|(i, x)| {
                xs.iter().enumerate().filter(move |(j, _)| *j != i).map(move |(_, y)| {
                    let s = symplectic_kernel(sys, n, x, y)?;
                    let t = symplectic_kernel(sys, n, y, x)?;
                    let m = matrix_kernel(sys, n, x, y)?;
                    let mt = matrix_kernel(sys, n, y, x)?;
                    let mut r = (&s + &t).abs_f64() / s.abs_f64().max(1.0);
                    for p in 0..2 {
                        for q in 0..2 {
                            r = r.max((&m[p][q] + &mt[q][p]).abs_f64() / m[p][q].abs_f64().max(1.0));
                        }
                    }
                    Ok(r)
                })
            })),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        b.gate(&format!("kernel_antisymmetry_N{n}"), pick(itol), anti);
    }

    for n in 1..=2 {
        let rr = match (&sys3, &xs, &meas) {
            (Ok(sys), Ok(xs), Ok(m)) => reproducing_residual(sys, n, &xs[0], &xs[2], m),
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e.clone()),
        };
        b.gate(&format!("reproducing_N{n}"), pick(itol), rr.as_ref().map(|r| r.residual).map_err(Clone::clone));
        b.diag(&format!("reproducing_plus_sign_N{n}"), itol, rr.as_ref().map(|r| r.residual_plus).map_err(Clone::clone));
    }

    let eps = EpsilonOperator::new(fam, 20).and_then(|op| {
        let sites = op.interior_sites(8);
        epsilon_inverse_residual(&op, &sites)
    });
    b.gate("epsilon_left_inverse", itol, eps.as_ref().map(|r| r.0).map_err(Clone::clone));
    b.gate("epsilon_right_inverse", itol, eps.as_ref().map(|r| r.1).map_err(Clone::clone));

    let w = correlation_window(fam);
    let sets = correlation_point_sets(fam);
    for k in 1..=2 {
        let res = worst(sets.iter().filter(|s| s.len() == k).map(|pts| {
            let a = correlation_pfaffian(fam, 2, pts, Window::Restricted(w))?;
            let c = correlation_bruteforce(fam, 2, pts, w)?;
            Ok((&a.value - &c.value).abs_f64() / c.value.abs_f64().max(1.0))
        }));
        b.gate(&format!("pfaffian_vs_enumeration_k{k}"), pick(CORRELATION_TOL), res);
    }

    let mw = if fam.is_linear() { 12 } else { 16 };
    for n in 1..=2 {
        let total = Measure::new(fam, MeasureKind::Symplectic, Window::Restricted(mw)).and_then(|m| {
            let mut acc = Scalar::zero();
            for nd in m.nodes(mw)? {
                acc = &acc + &correlation_pfaffian(fam, n, &[nd.site], Window::Restricted(mw))?.value;
            }
            Ok((&acc - &Scalar::from_int(n as i64)).abs_f64() / n as f64)
        });
        b.gate(&format!("density_total_mass_N{n}"), pick(itol), total);
    }

    if let Some(q) = fam.q() {
        let xs = [Scalar::one(), q.clone(), Scalar::ratio(3, 7)];
        let r = worst(xs.iter().map(|x| q_integral_rep_residual(fam, 1, x, Window::Auto).map(|r| r.even.max(r.odd))));
        b.gate("q_integral_representation_n1", itol, r);
    }
    b.checks
}

/// The prefactor identity at a fixed set of rational points.
fn q4b_checks() -> Vec<Check> {
    let mut b = Battery::new("general");
    let r = |n: i64, d: i64| Rational::from_parts_signed(n.into(), (d as u64).into());
    let cases: Vec<(Vec<Rational>, Rational)> = vec![
        (vec![r(1, 3), r(-2, 5)], r(1, 2)),
        (vec![r(7, 4), r(5, 9)], r(2, 3)),
        (vec![r(1, 3), r(-2, 5), r(7, 4)], r(2, 3)),
        (vec![r(1, 1), r(1, 2), r(1, 4)], r(1, 2)),
        (vec![r(-3, 8), r(11, 6), r(2, 7)], r(3, 10)),
    ];
    let res = cases.iter().map(|(xs, q)| {
        let (l, rr) = q4b_sides(xs, q);
        Ok(if l == rr { 0.0 } else { 1.0 })
    });
    b.gate("q4b_prefactor_identity", 0.0, worst(res));
    b.checks
}

pub fn run_battery(families: &[WeightFamily]) -> Vec<Check> {
    let per_family: Vec<Vec<Check>> = std::thread::scope(|s| {
        let handles: Vec<_> = families.iter().map(|f| s.spawn(move || family_battery(f))).collect();
        handles.into_iter().map(|h| h.join().expect("battery thread")).collect()
    });
    let mut out: Vec<Check> = per_family.into_iter().flatten().collect();
    out.extend(q4b_checks());
    out
}

pub fn default_families(tol: &TolerancePolicy) -> CliResult<Vec<WeightFamily>> {
    [FamilyName::Meixner, FamilyName::Charlier, FamilyName::Hahn, FamilyName::AlSalamCarlitz, FamilyName::LittleQJacobi]
        .into_iter()
        .map(|n| FamilySpec::defaults(n).build(tol.clone()))
        .collect()
}

fn failure_table(checks: &[Check]) -> String {
    let failed: Vec<&Check> = checks.iter().filter(|c| c.gating && !c.passed()).collect();
    if failed.is_empty() {
        return String::new();
    }
    let wf = failed.iter().map(|c| c.family.len()).max().unwrap_or(0).max(6);
    let wc = failed.iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{} check(s) failed\n", failed.len());
    let _ = writeln!(out, "{:<wf$}  {:<wc$}  {:>12}  {:>9}", "family", "check", "residual", "tolerance");
    for c in failed {
        let res = match (&c.residual, &c.error) {
            (Some(r), _) => format!("{r:.3e}"),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "-".into(),
        };
        let _ = writeln!(out, "{:<wf$}  {:<wc$}  {:>12}  {:>9.1e}", c.family, c.name, res, c.tolerance);
    }
    out
}

/// Runs the battery for `verify`; returns the report, the exit status and
/// the failure table.
pub fn command(a: &VerifyArgs, env: Option<&str>) -> CliResult<(Value, i32, String)> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let families = match a.family {
        Some(name) => {
            let spec = FamilySpec {
                name,
                alpha: a.alpha.as_deref(),
                beta: a.beta.as_deref(),
                a: a.a.as_deref(),
                q: a.q.as_deref(),
                hahn_n: a.hahn_n,
            };
            vec![spec.build(tol)?]
        }
        None => {
            if a.alpha.is_some() || a.beta.is_some() || a.a.is_some() || a.q.is_some() || a.hahn_n.is_some() {
                return Err(crate::param("family parameters need --family"));
            }
            default_families(&tol)?
        }
    };
    let checks = run_battery(&families);
    let gating: Vec<&Check> = checks.iter().filter(|c| c.gating).collect();
    let failed = gating.iter().filter(|c| !c.passed()).count();
    let mut body = Map::new();
    body.insert("families".into(), Value::Array(families.iter().map(json::family).collect()));
    body.insert("checks".into(), Value::Array(checks.iter().map(Check::to_json).collect()));
    body.insert(
        "summary".into(),
        json!({ "gating": gating.len(), "passed": gating.len() - failed, "failed": failed, "diagnostic": checks.len() - gating.len() }),
    );
    let code = if failed == 0 { EXIT_OK } else { EXIT_CHECKS_FAILED };
    Ok((json::report("verify", prec, body), code, failure_table(&checks)))
}
