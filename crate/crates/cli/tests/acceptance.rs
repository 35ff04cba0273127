//! Acceptance battery. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use skewlat::inner_products::{Measure, MeasureKind, Window};
use skewlat::kernels::{
    correlation_bruteforce, correlation_pfaffian, epsilon_inverse_residual, interior_sites, kernel_relation_residual,
    q4b_sides, q_integral_rep_residual, relation_grid, reproducing_residual, EpsilonOperator,
};
use skewlat::scalar_core::Rational;
use skewlat::skew_systems::{
    al_salam_carlitz_tau_closed_form, c_via_operator, moment_matrix, op_from_moments, pfaffian, sop_classical,
    sop_explicit, sop_from_moments, tridiagonal_action,
};
use skewlat::{OPSystem, Result, Scalar, TolerancePolicy, WeightFamily};
use skewlat_cli::verify::{correlation_point_sets, correlation_window, default_families};

const TAU_REL_TOL: f64 = 1e-25;
const TAU_TIME: Duration = Duration::from_secs(10);
const NORM_REL_TOL: f64 = 1e-20;
const SKEW_TOL: f64 = 1e-20;
const OPERATOR_REL_TOL: f64 = 1e-30;
const CORRELATION_TOL: f64 = 1e-15;
const BRUTEFORCE_TIME: Duration = Duration::from_secs(60);
const KERNEL_TOL: f64 = 1e-18;
const REPRODUCING_TOL: f64 = 1e-18;
const Q_INTEGRAL_TOL: f64 = 1e-15;
const VERIFY_TIME: Duration = Duration::from_secs(300);

fn families() -> Vec<WeightFamily> {
    default_families(&TolerancePolicy::default()).expect("default families")
}

fn rel(a: &Scalar, b: &Scalar) -> f64 {
    let d = (a - b).abs_f64();
    if d == 0.0 {
        0.0
    } else {
        d / b.abs_f64().max(f64::MIN_POSITIVE)
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(r: Result<(bool, String)>) -> Outcome {
    match r {
        Ok((pass, detail)) => Outcome { pass, detail },
        Err(e) => Outcome { pass: false, detail: format!("error: {e}") },
    }
}

fn tau_closed_form() -> Result<(bool, String)> {
    let fam = &families()[3];
    let start = Instant::now();
    let m = moment_matrix(fam, 8, Window::Auto)?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for n in 1..=4 {
        let pf = pfaffian(&m.leading(2 * n))?;
        let closed = al_salam_carlitz_tau_closed_form(fam, n)?;
        let r = rel(&pf, &closed);
        worst = worst.max(r);
        parts.push(format!("n={n} pf={:.6e} closed={}", pf.to_f64(), closed));
    }
    let t = start.elapsed();
    Ok((worst <= TAU_REL_TOL && t < TAU_TIME, format!("max rel {worst:.3e}, {:.2}s; {}", t.as_secs_f64(), parts.join(", "))))
}

fn norms_closed_form() -> Result<(bool, String)> {
    let fams = families();
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in [&fams[3], &fams[4]] {
        let ops = op_from_moments(fam, 6, Window::Auto)?;
        let (mut printed, mut computed) = (0.0f64, 0.0f64);
        for n in 0..=6 {
            printed = printed.max(rel(&ops.h[n], &fam.h_norm_printed(n)?));
            computed = computed.max(rel(&ops.h[n], &fam.h_norm(n)?));
        }
        pass &= printed <= NORM_REL_TOL;
        parts.push(format!("{}: closed form {printed:.3e} (corrected exponent {computed:.3e})", fam.name()));
    }
    Ok((pass, parts.join("; ")))
}

fn skew_battery() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families() {
        let exact = fam.hahn_n().is_some();
        let meas = Measure::new(fam, MeasureKind::Symplectic, Window::Auto)?;
        let mut systems = vec![sop_from_moments(fam, 8, Window::Auto)?, sop_classical(fam, 8)?];
        if !fam.is_linear() {
            systems.push(sop_explicit(fam, 8)?);
        }
        let mut worst = 0.0f64;
        for sys in &systems {
            let (res, _) = sys.residual(&meas)?;
            worst = worst.max(res);
            for (m, u) in sys.u.iter().enumerate() {
                let c = fam.c_const(2 * m)?;
                if exact {
                    pass &= *u == c;
                }
                worst = worst.max(rel(u, &c));
            }
        }
        pass &= if exact { worst == 0.0 } else { worst <= SKEW_TOL };
        parts.push(format!("{} x{} {worst:.2e}", fam.name(), systems.len()));
    }
    Ok((pass, parts.join(", ")))
}

fn tridiagonal() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families() {
        let exact = fam.hahn_n().is_some();
        let ops = OPSystem::classical(fam, 7)?;
        let (mut worst, mut band) = (0.0f64, 0.0f64);
        for n in 0..=6 {
            let c = c_via_operator(fam, n, &ops)?;
            let t = fam.c_const(n)?;
            if exact {
                pass &= c == t;
            }
            worst = worst.max(rel(&c, &t));
            let act = tridiagonal_action(fam, n, &ops)?;
            band = band.max(act.off_band / act.coeffs.iter().map(Scalar::abs_f64).fold(1.0, f64::max));
        }
        pass &= if exact { worst == 0.0 && band == 0.0 } else { worst <= OPERATOR_REL_TOL && band <= OPERATOR_REL_TOL };
        parts.push(format!("{} c {worst:.1e} band {band:.1e}", fam.name()));
    }
    Ok((pass, parts.join(", ")))
}

fn correlations() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families() {
        let exact = fam.hahn_n().is_some();
        let w = correlation_window(fam);
        let sets = correlation_point_sets(fam);
        let mut worst = 0.0f64;
        let mut brute = Duration::ZERO;
        for pts in &sets {
            let a = correlation_pfaffian(fam, 2, pts, Window::Restricted(w))?;
            let t = Instant::now();
            let b = correlation_bruteforce(fam, 2, pts, w)?;
            brute += t.elapsed();
            if exact {
                pass &= a.value == b.value;
            }
            worst = worst.max((&a.value - &b.value).abs_f64() / b.value.abs_f64().max(1.0));
        }
        pass &= sets.len() >= 5 && worst <= CORRELATION_TOL && brute < BRUTEFORCE_TIME;
        parts.push(format!("{} {} sets {worst:.1e} ({:.1}s)", fam.name(), sets.len(), brute.as_secs_f64()));
    }
    Ok((pass, parts.join(", ")))
}

fn kernel_relations() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families() {
        let grid = relation_grid(fam, 20, 10);
        pass &= grid.len() == 10;
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for n in 1..=2 {
            let rep = kernel_relation_residual(fam, n, &grid, 20)?;
            a = a.max(rep.direction_a);
            b = b.max(rep.direction_b);
        }
        pass &= a <= KERNEL_TOL && b <= KERNEL_TOL;
        parts.push(format!("{} a {a:.1e} b {b:.1e}", fam.name()));
    }
    Ok((pass, parts.join(", ")))
}

fn reproducing_and_epsilon() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families() {
        let sys = sop_classical(fam, 3)?;
        let meas = Measure::new(fam, MeasureKind::Symplectic, Window::Auto)?;
        let pts = interior_sites(fam, 10, 3);
        let (x, z) = (fam.site_x(&pts[0])?, fam.site_x(&pts[2])?);
        let mut rep = 0.0f64;
        for n in 1..=2 {
            rep = rep.max(reproducing_residual(&sys, n, &x, &z, &meas)?.residual);
        }
        let op = EpsilonOperator::new(fam, 20)?;
        let (l, r) = epsilon_inverse_residual(&op, &op.interior_sites(8))?;
        let eps = l.max(r);
        pass &= rep <= REPRODUCING_TOL && eps <= REPRODUCING_TOL;
        parts.push(format!("{} repr {rep:.1e} eps {eps:.1e}", fam.name()));
    }
    Ok((pass, parts.join(", ")))
}

fn q_integral() -> Result<(bool, String)> {
    let mut pass = true;
    let mut parts = Vec::new();
    for fam in &families()[3..] {
        let q = fam.q().expect("q-family");
        let mut worst = 0.0f64;
        for x in [Scalar::one(), q] {
            let r = q_integral_rep_residual(fam, 1, &x, Window::Auto)?;
            worst = worst.max(r.even).max(r.odd);
        }
        pass &= worst <= Q_INTEGRAL_TOL;
        parts.push(format!("{} {worst:.1e}", fam.name()));
    }
    Ok((pass, parts.join(", ")))
}

fn q4b() -> Result<(bool, String)> {
    let mut runner = TestRunner::deterministic();
    let r = |(n, d): (i64, i64)| Rational::from_parts_signed(n.into(), (d as u64).into());
    let mut cases = 0;
    let mut pass = true;
    for n in [2usize, 3] {
        let strat = (proptest::collection::vec((-60i64..60, 1i64..15), n), 1i64..10);
        for _ in 0..25 {
            let (pts, qn) = strat.new_tree(&mut runner).expect("strategy").current();
            let xs: Vec<Rational> = pts.into_iter().map(r).collect();
            let (lhs, rhs) = q4b_sides(&xs, &r((qn, 10)));
            pass &= lhs == rhs;
            cases += 1;
        }
    }
    Ok((pass, format!("{cases} random cases, exact equality")))
}

fn verify_cli() -> Result<(bool, String)> {
    let bin = env!("CARGO_BIN_EXE_skewlat");
    let run = || {
        let t = Instant::now();
        let out = Command::new(bin).arg("verify").env_remove("SKEWLAT_PRECISION_BITS").output().expect("spawn skewlat");
        (out, t.elapsed())
    };
    let (a, ta) = run();
    let (b, tb) = run();
    let completed = |o: &std::process::Output| matches!(o.status.code(), Some(0) | Some(1)) && !o.stdout.is_empty();
    let identical = a.stdout == b.stdout;
    let fast = ta < VERIFY_TIME && tb < VERIFY_TIME;
    let pass = completed(&a) && completed(&b) && identical && fast;
    Ok((
        pass,
        format!(
            "exit {:?}, {:.1}s and {:.1}s, {} bytes, identical={identical}",
            a.status.code(),
            ta.as_secs_f64(),
            tb.as_secs_f64(),
            a.stdout.len()
        ),
    ))
}

fn main() {
    // `cargo test -- --list` and similar harness probes carry no work here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Result<(bool, String)>); 10] = [
        ("tau closed form for Al-Salam-Carlitz", tau_closed_form),
        ("norm closed forms from moments", norms_closed_form),
        ("skew-orthogonality of all constructions", skew_battery),
        ("tridiagonal action constants", tridiagonal),
        ("Pfaffian correlations match enumeration", correlations),
        ("kernel relations in both directions", kernel_relations),
        ("reproducing property and epsilon inverse", reproducing_and_epsilon),
        ("q-integral representation", q_integral),
        ("q4b prefactor identity", q4b),
        ("verify is fast and deterministic", verify_cli),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = outcome(f());
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
