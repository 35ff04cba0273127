//! Serialisation helpers shared by every subcommand.
//!
//! Exact rationals become `"p/q"` strings. Floats become objects holding a
//! scientific decimal string and its absolute error bound.

use serde_json::{json, Map, Value};
use skewlat::scalar_core::{digits_for_bits, format_float};
use skewlat::{Family, Poly, Scalar, WeightFamily};

pub const SCHEMA: &str = "skewlat/1";

pub fn scalar(s: &Scalar) -> Value {
    match s {
        Scalar::Exact(r) => Value::String(r.to_string()),
        Scalar::Float(b) => json!({
            "value": format_float(b.value(), digits_for_bits(b.precision())),
            "err": f64_str(b.err()),
        }),
    }
}

/// Parses a value written by [`scalar`].
pub fn parse_scalar(v: &Value, prec: usize) -> Option<Scalar> {
    match v {
        Value::String(s) => Scalar::parse(s, prec).ok(),
        Value::Object(m) => {
            let val = Scalar::parse(m.get("value")?.as_str()?, prec).ok()?;
            let err: f64 = m.get("err")?.as_str()?.parse().ok()?;
            Some(val.with_added_err(err, prec))
        }
        _ => None,
    }
}

/// Shortest round-trip rendering of an `f64`.
pub fn f64_str(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:e}")
    }
}

pub fn poly(p: &Poly) -> Value {
    Value::Array(p.coeffs().iter().map(scalar).collect())
}

pub fn matrix(rows: &[Vec<Scalar>]) -> Value {
    Value::Array(rows.iter().map(|r| Value::Array(r.iter().map(scalar).collect())).collect())
}

pub fn family(fam: &WeightFamily) -> Value {
    let mut params = Map::new();
    let mut put = |k: &str, v: String| {
        params.insert(k.into(), Value::String(v));
    };
    match fam.family() {
        Family::Meixner { beta, a } => {
            put("beta", beta.to_string());
            put("a", a.to_string());
        }
        Family::Charlier { a } => put("a", a.to_string()),
        Family::Hahn { alpha, beta, n } => {
            put("alpha", alpha.to_string());
            put("beta", beta.to_string());
            put("N", n.to_string());
        }
        Family::AlSalamCarlitz { alpha, q } => {
            put("alpha", alpha.to_string());
            put("q", q.to_string());
        }
        Family::LittleQJacobi { alpha, beta, q } => {
            put("alpha", alpha.to_string());
            put("beta", beta.to_string());
            put("q", q.to_string());
        }
    }
    json!({ "name": fam.name(), "params": params })
}

/// Envelope common to every report.
pub fn report(command: &str, precision_bits: usize, body: Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("schema".into(), SCHEMA.into());
    m.insert("command".into(), command.into());
    m.insert("precision_bits".into(), precision_bits.into());
    m.extend(body);
    Value::Object(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values_are_fraction_strings() {
        assert_eq!(scalar(&Scalar::ratio(-3, 4)), json!("-3/4"));
        assert_eq!(scalar(&Scalar::from_int(5)), json!("5"));
        assert_eq!(parse_scalar(&json!("-3/4"), 128), Some(Scalar::ratio(-3, 4)));
    }

    #[test]
    fn floats_round_trip_within_err() {
        let x = &Scalar::one().to_float(256) / &Scalar::from_int(3);
        let v = scalar(&x);
        let back = parse_scalar(&v, 256).unwrap();
        let d = (&back - &x).abs_f64();
        assert!(d <= back.err_bound() + x.err_bound());
        assert!(v["value"].as_str().unwrap().starts_with("3.333"));
    }
}
