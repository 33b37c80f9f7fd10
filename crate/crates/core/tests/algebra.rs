use holodense_core::linalg::CMatrix;
use holodense_core::{AffineMap, AutWord, CPoint, Overshear, Poly, Shear, C64};
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

fn vec_c(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(c64(), n)
}

fn small_poly() -> impl Strategy<Value = Poly> {
    prop::collection::vec(c64(), 1..4).prop_map(|c| Poly::new(c.into_iter().map(|x| x * 0.3).collect()))
}

#[derive(Clone, Debug)]
enum Kind {
    Shear,
    Overshear,
    Affine,
}

fn primitive(n: usize, kinds: &'static [Kind]) -> impl Strategy<Value = Option<holodense_core::Primitive>> {
    (prop::sample::select(kinds), vec_c(n), vec_c(n), vec_c(n), small_poly(), vec_c(n * n)).prop_map(move |(k, v, l, mu, h, m)| {
        match k {
            Kind::Shear => Shear::new(&v, &l, h).ok().map(Into::into),
            Kind::Overshear => Overshear::new(&v, &l, &mu, h).ok().map(Into::into),
            Kind::Affine => {
                let rows: Vec<Vec<C64>> = (0..n)
                    .map(|i| (0..n).map(|j| m[i * n + j] * 0.3 + if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect())
                    .collect();
                AffineMap::new(CMatrix::from_rows(&rows), v).ok().map(Into::into)
            }
        }
    })
}

fn word(n: usize, kinds: &'static [Kind]) -> impl Strategy<Value = AutWord> {
    prop::collection::vec(primitive(n, kinds), 0..6)
        .prop_map(move |ps| AutWord::from_primitives(n, ps.into_iter().flatten().collect()).unwrap())
}

const ALL: &[Kind] = &[Kind::Shear, Kind::Overshear, Kind::Affine];
const SHEARS: &[Kind] = &[Kind::Shear];

fn point(n: usize) -> impl Strategy<Value = CPoint> {
    vec_c(n).prop_map(CPoint)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inverse_round_trip(w in word(2, ALL), z in point(2)) {
        let y = w.eval(&z);
        prop_assume!(y.is_finite() && y.norm() < 1e3);
        let back = w.inverse().eval(&y);
        prop_assert!(back.dist(&z) <= 1e-12 * (1.0 + z.norm()), "{} vs {}", back.dist(&z), y.norm());
    }

    #[test]
    fn inverse_round_trip_c3(w in word(3, ALL), z in point(3)) {
        let y = w.eval(&z);
        prop_assume!(y.is_finite() && y.norm() < 1e3);
        prop_assert!(w.inverse().eval(&y).dist(&z) <= 1e-12 * (1.0 + z.norm()));
    }

    #[test]
    fn jacobian_matches_differences(w in word(2, ALL), z in point(2), k in 0usize..2) {
        prop_assume!(w.eval(&z).norm() < 1e3);
        let j = w.jacobian(&z);
        let step = 1e-5;
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += step;
        zm[k] -= step;
        let (fp, fm) = (w.eval(&zp), w.eval(&zm));
        let col: Vec<C64> = (0..2).map(|i| (fp[i] - fm[i]) / (2.0 * step)).collect();
        let exact: Vec<C64> = (0..2).map(|i| j.matvec(&CPoint::basis(2, k).0)[i]).collect();
        let err = CPoint(col).dist(&CPoint(exact.clone()));
        prop_assert!(err <= 1e-6 * (1.0 + CPoint(exact).norm()), "{err}");
    }

    #[test]
    fn directional_derivative_is_jacobian_column(w in word(2, ALL), z in point(2), dir in point(2)) {
        prop_assume!(w.eval(&z).norm() < 1e3);
        let (val, d) = w.eval_with_directional(&z.0, &dir.0);
        let jd = w.jacobian(&z).matvec(&dir.0);
        prop_assert!(CPoint(val).dist(&w.eval(&z)) == 0.0);
        prop_assert!(CPoint(d).dist(&CPoint(jd.clone())) <= 1e-12 * (1.0 + CPoint(jd).norm()));
    }

    #[test]
    fn shear_words_preserve_volume(w in word(2, SHEARS), z in point(2)) {
        prop_assume!(w.eval(&z).norm() < 1e3);
        let det = w.jacobian(&z).det();
        prop_assert!((det.norm() - 1.0).abs() < 1e-10, "{det}");
    }

    #[test]
    fn compose_applies_left_word_first(a in word(2, ALL), b in word(2, ALL), z in point(2)) {
        let y = a.eval(&z);
        prop_assume!(y.norm() < 1e3);
        prop_assert_eq!(a.compose(&b).eval(&z), b.eval(&y));
    }

    #[test]
    fn double_inverse_evaluates_like_the_word(w in word(2, ALL), z in point(2)) {
        let y = w.eval(&z);
        prop_assume!(y.norm() < 1e3);
        prop_assert_eq!(w.compose(&w.inverse()).len(), 2 * w.len());
        prop_assert!(w.inverse().inverse().eval(&z).dist(&y) <= 1e-12 * (1.0 + y.norm()));
    }
}

#[test]
fn degree_cap_and_from_parts() {
    let v = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let l = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let big = Poly::monomial(C64::new(1.0, 0.0), 40);
    assert!(Shear::new(&v, &l, big.clone()).is_err());
    let s = Shear::from_parts(&v, &l, big).unwrap();
    assert_eq!(s.poly().degree(), 40);
    // the form must already annihilate the direction
    assert!(Shear::from_parts(&v, &[C64::new(1.0, 0.0), C64::new(0.5, 0.0)], Poly::zero()).is_err());
    assert!(Overshear::from_parts(&v, &l, &[C64::new(0.0, 0.0), C64::new(2.0, 0.0)], Poly::zero()).is_err());
}
