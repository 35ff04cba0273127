use dashu_int::IBig;
use dashu_ratio::RBig;
use proptest::prelude::*;
use skewlat::kernels::{matrix_kernel, q4b_sides, symplectic_kernel};
use skewlat::polynomials::{apply_lattice_operator, LatticeOp};
use skewlat::skew_systems::{det, pfaffian, skew_borel, sop_classical};
use skewlat::{Poly, Scalar, SkewMatrix, TolerancePolicy, WeightFamily};

fn r(n: i64, d: i64) -> RBig {
    RBig::from_parts_signed(IBig::from(n), IBig::from(d))
}

fn rational() -> impl Strategy<Value = RBig> {
    (-40i64..40, 1i64..12).prop_map(|(n, d)| r(n, d))
}

fn skew_matrix(dim: usize) -> impl Strategy<Value = SkewMatrix> {
    prop::collection::vec(rational(), dim * (dim - 1) / 2).prop_map(move |vals| {
        let mut it = vals.into_iter();
        SkewMatrix::from_upper(dim, |_, _| Ok(Scalar::rational(it.next().expect("enough entries")))).unwrap()
    })
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

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pfaffian_squares_to_determinant(m in (1usize..6).prop_flat_map(|k| skew_matrix(2 * k))) {
        let pf = pfaffian(&m).unwrap();
        prop_assert_eq!(&pf * &pf, det(m.rows()));
    }

    #[test]
    fn borel_factors_reconstruct(m in skew_matrix(6)) {
        if let Ok(b) = skew_borel(&m) {
            prop_assert_eq!(b.reconstruct(), m.rows().to_vec());
            let prod = b.u.iter().fold(Scalar::one(), |acc, u| &acc * u);
            prop_assert_eq!(prod, pfaffian(&m).unwrap());
        } else {
            prop_assert!(pfaffian(&m.leading(2)).unwrap().value_is_zero()
                || pfaffian(&m.leading(4)).unwrap().value_is_zero()
                || pfaffian(&m).unwrap().value_is_zero());
        }
    }

    #[test]
    fn q4b_prefactor_identity(xs in prop::collection::vec(rational(), 2..=3), q in (1i64..9).prop_map(|n| r(n, 10))) {
        let (l, rr) = q4b_sides(&xs, &q);
        prop_assert_eq!(l, rr);
    }

    #[test]
    fn difference_operator_lowers_degree(c in prop::collection::vec(-20i64..20, 1..8)) {
        let p = Poly::from_ints(&c);
        let d = apply_lattice_operator(&LatticeOp::Delta, &p).unwrap();
        let x = Scalar::ratio(7, 3);
        prop_assert_eq!(d.eval(&x), &p.eval(&(&x + &Scalar::one())) - &p.eval(&x));
        if let Some(deg) = p.degree() {
            prop_assert!(d.degree().map_or(true, |e| e < deg.max(1)));
        }
    }

    #[test]
    fn kernels_are_antisymmetric(i in 0usize..5, a in 0u32..10, b in 0u32..10, n in 1usize..3) {
        let fam = &families()[i];
        let sys = sop_classical(fam, 3).unwrap();
        let site = |j: u32| if fam.is_linear() { skewlat::Site::Int(j as i64) } else {
            let br = fam.branches();
            skewlat::Site::Ladder { branch: br[j as usize % br.len()], s: j / 2 }
        };
        let (x, y) = (fam.site_x(&site(a)).unwrap(), fam.site_x(&site(b)).unwrap());
        let s = symplectic_kernel(&sys, n, &x, &y).unwrap();
        let t = symplectic_kernel(&sys, n, &y, &x).unwrap();
        prop_assert!((&s + &t).abs_f64() <= 1e-40 * s.abs_f64().max(1.0));
        let m = matrix_kernel(&sys, n, &x, &y).unwrap();
        let mt = matrix_kernel(&sys, n, &y, &x).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((&m[r][c] + &mt[c][r]).abs_f64() <= 1e-40 * m[r][c].abs_f64().max(1.0));
            }
        }
    }
}
