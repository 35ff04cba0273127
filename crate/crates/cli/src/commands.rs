use std::fmt::Write as _;

use serde_json::{json, Map, Value};
use skewlat::inner_products::{Measure, MeasureKind, Window};
use skewlat::kernels::{cd_kernel, correlation_bruteforce, correlation_pfaffian, matrix_kernel, symplectic_kernel};
use skewlat::skew_systems::{moment_matrix, op_from_moments, pfaffian, skew_borel, sop_classical, sop_explicit, sop_from_moments};
use skewlat::{OPSystem, Scalar, SkewOPSystem, TolerancePolicy, WeightFamily};

use crate::args::*;
use crate::json::{self, f64_str};
use crate::{param, verify, CliError, Outcome, DEFAULT_PRECISION_BITS, EXIT_OK};

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Flag beats environment beats default.
pub fn policy(num: &NumericArgs, env_precision: Option<&str>) -> CliResult<TolerancePolicy> {
    let bits = match (num.precision_bits, env_precision) {
        (Some(b), _) => b,
        (None, Some(s)) => s
            .trim()
            .parse()
            .map_err(|_| param(format!("{} must be a positive integer, got '{s}'", crate::PRECISION_ENV)))?,
        (None, None) => DEFAULT_PRECISION_BITS,
    };
    let mut t = TolerancePolicy::default().with_precision(bits);
    if let Some(v) = num.series_tail_tol {
        t.series_tail_tol = v;
    }
    if let Some(v) = num.identity_tol {
        t.identity_tol = v;
    }
    if let Some(v) = num.max_terms {
        t.max_terms = v;
    }
    t.validate()?;
    Ok(t)
}

pub fn rational(name: &str, s: &str) -> CliResult<skewlat::scalar_core::Rational> {
    let v = Scalar::parse(s, 64).map_err(|_| param(format!("--{name}: '{s}' is not a rational number")))?;
    v.as_rational().cloned().ok_or_else(|| param(format!("--{name}: '{s}' must be an exact fraction such as 3/4")))
}

/// The parameters a family accepts, with their defaults.
pub struct FamilySpec<'a> {
    pub name: FamilyName,
    pub alpha: Option<&'a str>,
    pub beta: Option<&'a str>,
    pub a: Option<&'a str>,
    pub q: Option<&'a str>,
    pub hahn_n: Option<u32>,
}

impl<'a> FamilySpec<'a> {
    pub fn from_args(f: &'a FamilyArgs, alias: Option<u32>) -> Self {
        FamilySpec {
            name: f.family,
            alpha: f.alpha.as_deref(),
            beta: f.beta.as_deref(),
            a: f.a.as_deref(),
            q: f.q.as_deref(),
            hahn_n: f.hahn_n.or(alias),
        }
    }

    pub fn defaults(name: FamilyName) -> Self {
        FamilySpec { name, alpha: None, beta: None, a: None, q: None, hahn_n: None }
    }

    pub fn build(&self, tol: TolerancePolicy) -> CliResult<WeightFamily> {
        let get = |flag: &str, v: Option<&str>, default: &str| rational(flag, v.unwrap_or(default));
        let unused = |flags: &[(&str, bool)]| -> CliResult<()> {
            match flags.iter().find(|(_, set)| *set) {
                Some((f, _)) => Err(param(format!("--{f} does not apply to this family"))),
                None => Ok(()),
            }
        };
        let fam = match self.name {
            FamilyName::Meixner => {
                unused(&[("alpha", self.alpha.is_some()), ("q", self.q.is_some()), ("hahn-N", self.hahn_n.is_some())])?;
                WeightFamily::meixner(get("beta", self.beta, "1")?, get("a", self.a, "1/2")?, tol)
            }
            FamilyName::Charlier => {
                unused(&[
                    ("alpha", self.alpha.is_some()),
                    ("beta", self.beta.is_some()),
                    ("q", self.q.is_some()),
                    ("hahn-N", self.hahn_n.is_some()),
                ])?;
                WeightFamily::charlier(get("a", self.a, "1")?, tol)
            }
            FamilyName::Hahn => {
                unused(&[("a", self.a.is_some()), ("q", self.q.is_some())])?;
                WeightFamily::hahn(get("alpha", self.alpha, "1")?, get("beta", self.beta, "1")?, self.hahn_n.unwrap_or(12), tol)
            }
            FamilyName::AlSalamCarlitz => {
                unused(&[("beta", self.beta.is_some()), ("a", self.a.is_some()), ("hahn-N", self.hahn_n.is_some())])?;
                WeightFamily::al_salam_carlitz(get("alpha", self.alpha, "-1")?, get("q", self.q, "1/2")?, tol)
            }
            FamilyName::LittleQJacobi => {
                unused(&[("a", self.a.is_some()), ("hahn-N", self.hahn_n.is_some())])?;
                WeightFamily::little_q_jacobi(
                    get("alpha", self.alpha, "1")?,
                    get("beta", self.beta, "1")?,
                    get("q", self.q, "1/2")?,
                    tol,
                )
            }
        };
        Ok(fam?)
    }
}

fn window(w: Option<usize>) -> Window {
    w.map_or(Window::Auto, Window::Points)
}

fn parse_value(s: &str, prec: usize) -> CliResult<Scalar> {
    Scalar::parse(s, prec).map_err(|_| param(format!("'{s}' is not a number")))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Moments => "moments",
        Method::Classical => "classical",
        Method::Explicit => "explicit",
    }
}

fn build_ops(fam: &WeightFamily, n_max: usize, method: Method, win: Window) -> CliResult<OPSystem> {
    Ok(match method {
        Method::Moments => op_from_moments(fam, n_max, win)?,
        Method::Classical => OPSystem::classical(fam, n_max)?,
        Method::Explicit => return Err(param("orthogonal polynomials have no explicit method; use moments or classical")),
    })
}

fn build_sops(fam: &WeightFamily, n_max: usize, method: Method, win: Window) -> CliResult<SkewOPSystem> {
    Ok(match method {
        Method::Moments => sop_from_moments(fam, n_max, win)?,
        Method::Classical => sop_classical(fam, n_max)?,
        Method::Explicit => sop_explicit(fam, n_max)?,
    })
}

enum Report {
    Json(Value),
    Csv(String),
}

fn json_only(o: &OutputArgs, what: &str) -> CliResult<()> {
    if o.format == Format::Csv {
        return Err(param(format!("{what} output is JSON only; CSV is reserved for kernel tables")));
    }
    Ok(())
}

pub fn dispatch(cli: &Cli, env_precision: Option<&str>) -> CliResult<Outcome> {
    let (report, output, code, stderr) = match &cli.command {
        Command::Ops(a) => {
            json_only(&a.output, "ops")?;
            (Report::Json(ops(a, env_precision)?), &a.output, EXIT_OK, String::new())
        }
        Command::Sops(a) => {
            json_only(&a.output, "sops")?;
            (Report::Json(sops(a, env_precision)?), &a.output, EXIT_OK, String::new())
        }
        Command::Kernel(a) => (kernel(a, env_precision)?, &a.output, EXIT_OK, String::new()),
        Command::Correlate(a) => {
            json_only(&a.output, "correlate")?;
            (Report::Json(correlate(a, env_precision)?), &a.output, EXIT_OK, String::new())
        }
        Command::Moments(a) => {
            json_only(&a.output, "moments")?;
            (Report::Json(moments(a, env_precision)?), &a.output, EXIT_OK, String::new())
        }
        Command::Verify(a) => {
            json_only(&a.output, "verify")?;
            let (v, code, table) = verify::command(a, env_precision)?;
            (Report::Json(v), &a.output, code, table)
        }
    };
    let text = match report {
        Report::Json(v) => serde_json::to_string_pretty(&v).expect("JSON values serialise") + "\n",
        Report::Csv(s) => s,
    };
    let stdout = match &output.output {
        Some(path) => {
            std::fs::write(path, &text).map_err(|e| param(format!("cannot write {}: {e}", path.display())))?;
            String::new()
        }
        None => text,
    };
    Ok(Outcome { code, stdout, stderr })
}

fn ops(a: &OpsArgs, env: Option<&str>) -> CliResult<Value> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let fam = FamilySpec::from_args(&a.family, a.hahn_alias).build(tol)?;
    let sys = build_ops(&fam, a.n_max, a.method, window(a.window))?;
    let polys: Vec<Value> = sys
        .polys
        .iter()
        .zip(&sys.h)
        .enumerate()
        .map(|(n, (p, h))| json!({ "degree": n, "coefficients": json::poly(p), "h": json::scalar(h) }))
        .collect();
    let mut body = Map::new();
    body.insert("family".into(), json::family(&fam));
    body.insert("method".into(), method_name(a.method).into());
    body.insert("n_max".into(), a.n_max.into());
    body.insert("polynomials".into(), polys.into());
    Ok(json::report("ops", prec, body))
}

fn sops(a: &SopsArgs, env: Option<&str>) -> CliResult<Value> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let fam = FamilySpec::from_args(&a.family, a.hahn_alias).build(tol)?;
    let win = window(a.window);
    let sys = build_sops(&fam, a.n_max, a.method, win)?;
    let meas = Measure::new(&fam, MeasureKind::Symplectic, win)?;
    let (residual, gram) = sys.residual(&meas)?;
    let polys: Vec<Value> = sys
        .polys
        .iter()
        .enumerate()
        .map(|(n, p)| json!({ "degree": n, "coefficients": json::poly(p) }))
        .collect();
    let mut body = Map::new();
    body.insert("family".into(), json::family(&fam));
    body.insert("method".into(), method_name(a.method).into());
    body.insert("provenance".into(), sys.provenance.as_str().into());
    body.insert("n_max".into(), a.n_max.into());
    body.insert("polynomials".into(), polys.into());
    body.insert("u".into(), Value::Array(sys.u.iter().map(json::scalar).collect()));
    body.insert("gram".into(), json::matrix(&gram));
    body.insert("residual".into(), f64_str(residual).into());
    Ok(json::report("sops", prec, body))
}

fn parse_pairs(s: &str, prec: usize) -> CliResult<Vec<(Scalar, Scalar)>> {
    let pairs: Vec<_> = s
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| match t.split(',').collect::<Vec<_>>()[..] {
            [x, y] => Ok((parse_value(x, prec)?, parse_value(y, prec)?)),
            _ => Err(param(format!("point pair '{t}' must be 'x,y'"))),
        })
        .collect::<CliResult<_>>()?;
    if pairs.is_empty() {
        return Err(param("--points is empty"));
    }
    Ok(pairs)
}

fn csv_cell(s: &Scalar) -> String {
    match s {
        Scalar::Exact(r) => r.to_string(),
        Scalar::Float(b) => skewlat::scalar_core::format_float(b.value(), skewlat::scalar_core::digits_for_bits(b.precision())),
    }
}

fn kernel(a: &KernelArgs, env: Option<&str>) -> CliResult<Report> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let fam = FamilySpec::from_args(&a.family, None).build(tol)?;
    if a.n == 0 {
        return Err(param("--N must be at least 1"));
    }
    let pairs = parse_pairs(&a.points, prec)?;
    let mut rows: Vec<(Scalar, Scalar, Vec<Scalar>)> = Vec::new();
    match a.kind {
        KernelChoice::Unitary => {
            let sys = build_ops(&fam, a.n, a.method, Window::Auto)?;
            for (x, y) in pairs {
                let v = cd_kernel(&sys, a.n, &x, &y)?;
                rows.push((x, y, vec![v]));
            }
        }
        KernelChoice::Symplectic | KernelChoice::Matrix => {
            let sys = build_sops(&fam, 2 * a.n - 1, a.method, Window::Auto)?;
            for (x, y) in pairs {
                let v = if a.kind == KernelChoice::Symplectic {
                    vec![symplectic_kernel(&sys, a.n, &x, &y)?]
                } else {
                    matrix_kernel(&sys, a.n, &x, &y)?.into_iter().flatten().collect()
                };
                rows.push((x, y, v));
            }
        }
    }
    let kind = match a.kind {
        KernelChoice::Unitary => "unitary",
        KernelChoice::Symplectic => "symplectic",
        KernelChoice::Matrix => "matrix",
    };
    if a.output.format == Format::Csv {
        let mut out = String::new();
        if a.kind == KernelChoice::Matrix {
            out.push_str("x,y,k11,k12,k21,k22,err\n");
        } else {
            out.push_str("x,y,value,err\n");
        }
        for (x, y, vals) in &rows {
            let err = vals.iter().map(Scalar::err_bound).fold(0.0, f64::max);
            let cells: Vec<String> = vals.iter().map(csv_cell).collect();
            let _ = writeln!(out, "{},{},{},{}", csv_cell(x), csv_cell(y), cells.join(","), f64_str(err));
        }
        return Ok(Report::Csv(out));
    }
    let values: Vec<Value> = rows
        .iter()
        .map(|(x, y, v)| {
            let value = if a.kind == KernelChoice::Matrix {
                json!([[json::scalar(&v[0]), json::scalar(&v[1])], [json::scalar(&v[2]), json::scalar(&v[3])]])
            } else {
                json::scalar(&v[0])
            };
            json!({ "x": json::scalar(x), "y": json::scalar(y), "value": value })
        })
        .collect();
    let mut body = Map::new();
    body.insert("family".into(), json::family(&fam));
    body.insert("kind".into(), kind.into());
    body.insert("method".into(), method_name(a.method).into());
    body.insert("N".into(), a.n.into());
    body.insert("values".into(), values.into());
    Ok(Report::Json(json::report("kernel", prec, body)))
}

fn correlate(a: &CorrelateArgs, env: Option<&str>) -> CliResult<Value> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let fam = FamilySpec::from_args(&a.family, None).build(tol)?;
    let xs: Vec<Scalar> = a
        .points
        .split([';', ','])
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_value(t, prec))
        .collect::<CliResult<_>>()?;
    if let Some(k) = a.k {
        if k != xs.len() {
            return Err(param(format!("--k {k} but {} points were given", xs.len())));
        }
    }
    let sites = xs.iter().map(|x| fam.site_of(x)).collect::<skewlat::Result<Vec<_>>>()?;
    let mut body = Map::new();
    body.insert("family".into(), json::family(&fam));
    body.insert("N".into(), a.n.into());
    body.insert("k".into(), xs.len().into());
    body.insert("points".into(), Value::Array(xs.iter().map(json::scalar).collect()));
    if a.check_bruteforce {
        let w = a.window.unwrap_or(if fam.is_linear() { 20 } else { 24 });
        // enumeration first: its resource guard is cheap to hit
        let bf = correlation_bruteforce(&fam, a.n, &sites, w)?;
        let pf = correlation_pfaffian(&fam, a.n, &sites, Window::Restricted(w))?;
        let diff = (&pf.value - &bf.value).abs();
        body.insert("window".into(), json!({ "restricted": w }));
        body.insert("pfaffian".into(), json::scalar(&pf.value));
        body.insert("bruteforce".into(), json::scalar(&bf.value));
        body.insert("residual".into(), f64_str(diff.abs_f64()).into());
        body.insert("err_bound".into(), f64_str(pf.err_bound + bf.err_bound).into());
    } else {
        let win = a.window.map_or(Window::Auto, Window::Restricted);
        let pf = correlation_pfaffian(&fam, a.n, &sites, win)?;
        body.insert("window".into(), a.window.map_or(json!("auto"), |w| json!({ "restricted": w })));
        body.insert("pfaffian".into(), json::scalar(&pf.value));
        body.insert("err_bound".into(), f64_str(pf.err_bound).into());
    }
    Ok(json::report("correlate", prec, body))
}

fn moments(a: &MomentsArgs, env: Option<&str>) -> CliResult<Value> {
    let tol = policy(&a.numeric, env)?;
    let prec = tol.precision_bits;
    let fam = FamilySpec::from_args(&a.family, a.hahn_alias).build(tol)?;
    if a.dim == 0 || a.dim % 2 == 1 {
        return Err(param("--dim must be a positive even number"));
    }
    let m = moment_matrix(&fam, a.dim, window(a.window))?;
    let tau = (1..=a.dim / 2)
        .map(|n| pfaffian(&m.leading(2 * n)).map(|v| json::scalar(&v)))
        .collect::<skewlat::Result<Vec<_>>>()?;
    let borel = skew_borel(&m)?;
    let mut body = Map::new();
    body.insert("family".into(), json::family(&fam));
    body.insert("dim".into(), a.dim.into());
    body.insert("matrix".into(), json::matrix(m.rows()));
    body.insert("tau".into(), tau.into());
    body.insert("u".into(), Value::Array(borel.u.iter().map(json::scalar).collect()));
    body.insert("s".into(), json::matrix(&borel.s));
    Ok(json::report("moments", prec, body))
}
