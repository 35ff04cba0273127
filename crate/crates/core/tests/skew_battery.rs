use dashu_int::IBig;
use dashu_ratio::RBig;
use skewlat::inner_products::{Measure, MeasureKind, Window};
use skewlat::skew_systems::{c_via_operator, pfaffian, sop_classical, sop_explicit, sop_from_moments, moment_matrix, OPSystem, Provenance};
use skewlat::{TolerancePolicy, WeightFamily};

fn r(n: i64, d: i64) -> RBig {
    RBig::from_parts_signed(IBig::from(n), IBig::from(d))
}

fn families() -> Vec<WeightFamily> {
    let t = TolerancePolicy::default();
    vec![
        WeightFamily::meixner(r(1, 1), r(1, 2), t.clone()).unwrap(),
        WeightFamily::charlier(r(1, 1), t.clone()).unwrap(),
        WeightFamily::hahn(r(1, 1), r(1, 1), 12, t.clone()).unwrap(),
        WeightFamily::al_salam_carlitz(r(-1, 1), r(1, 2), t.clone()).unwrap(),
        WeightFamily::little_q_jacobi(r(1, 1), r(1, 1), r(1, 2), t).unwrap(),
    ]
}

#[test]
fn all_provenances_are_skew_orthogonal_to_degree_eight() {
    for fam in families() {
        let meas = Measure::new(&fam, MeasureKind::Symplectic, Window::Auto).unwrap();
        let mut systems = vec![sop_from_moments(&fam, 8, Window::Auto).unwrap(), sop_classical(&fam, 8).unwrap()];
        if !fam.is_linear() {
            systems.push(sop_explicit(&fam, 8).unwrap());
        }
        for sys in &systems {
            let (res, _) = sys.residual(&meas).unwrap();
            let bound = if fam.name() == "hahn" { 0.0 } else { 1e-20 };
            assert!(res <= bound, "{} {:?}: {res:e}", fam.name(), sys.provenance);
            for (m, u) in sys.u.iter().enumerate() {
                let c = fam.c_const(2 * m).unwrap();
                assert!((u - &c).abs_f64() <= 1e-20 * c.abs_f64(), "{} {:?} u{m}", fam.name(), sys.provenance);
                if sys.provenance == Provenance::MomentBased && fam.name() == "hahn" {
                    assert_eq!(u, &c);
                }
            }
        }
    }
}

#[test]
fn operator_constants_through_degree_six() {
    for fam in families() {
        let ops = OPSystem::classical(&fam, 7).unwrap();
        for n in 0..=6 {
            let c = c_via_operator(&fam, n, &ops).unwrap();
            let t = fam.c_const(n).unwrap();
            assert!((&c - &t).abs_f64() <= 1e-40 * t.abs_f64(), "{} n={n}", fam.name());
        }
    }
}

#[test]
fn pfaffian_of_moment_matrix_is_product_of_u() {
    for fam in families() {
        let m = moment_matrix(&fam, 8, Window::Auto).unwrap();
        for n in 1..=4 {
            let pf = pfaffian(&m.leading(2 * n)).unwrap();
            let prod = (0..n).fold(skewlat::Scalar::one(), |acc, i| &acc * &fam.c_const(2 * i).unwrap());
            assert!((&pf - &prod).abs_f64() <= 1e-25 * prod.abs_f64(), "{} n={n}", fam.name());
        }
    }
}
