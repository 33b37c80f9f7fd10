use holodense_core::interpolation::{point_mover, EXACT_TOL};
use holodense_core::pushoff::{basis_templates, fit_field, flow_word, splitting_error, FitOptions, ShearField};
use holodense_core::{CPoint, Poly, C64};
use proptest::prelude::*;

fn pt() -> impl Strategy<Value = CPoint> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 2).prop_map(|v| CPoint::from_pairs(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mover_fixes_and_hits(fixed in prop::collection::vec(pt(), 0..3), q in pt(), a in pt()) {
        prop_assume!(fixed.iter().all(|p| p.dist(&q) > 0.1 && p.dist(&a) > 0.1));
        prop_assume!(fixed.iter().enumerate().all(|(i, p)| fixed[..i].iter().all(|r| r.dist(p) > 0.1)));
        let w = point_mover(&fixed, &q, &a, &[], 1.0).unwrap();
        prop_assert!(w.eval(&q).dist(&a) <= EXACT_TOL * (1.0 + a.norm()));
        for p in &fixed {
            prop_assert!(w.eval(p).dist(p) <= EXACT_TOL * (1.0 + p.norm()));
        }
    }

    #[test]
    fn shear_flows_are_exact_one_parameter_groups(t in -1.0f64..1.0, s in -1.0f64..1.0, z in pt()) {
        let f = ShearField::new(
            &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)],
            &[C64::new(0.0, 0.8), C64::new(0.6, 0.0)],
            Poly::new(vec![C64::new(0.2, 0.1), C64::new(0.0, 0.0), C64::new(0.5, 0.0)]),
        )
        .unwrap();
        let (mut a, mut b) = (z.0.clone(), z.0.clone());
        f.flow(t).apply(&mut a);
        f.flow(s).apply(&mut a);
        f.flow(t + s).apply(&mut b);
        prop_assert!(holodense_core::point::dist(&a, &b) <= 1e-12 * (1.0 + z.norm()));
    }
}

#[test]
fn splitting_converges_with_steps() {
    let fields: Vec<ShearField> = basis_templates(2, 1).into_iter().step_by(3).take(3).collect();
    let probes: Vec<C64> = (0..8).flat_map(|k| [C64::new(0.1 * k as f64, 0.2), C64::new(-0.3, 0.05 * k as f64)]).collect();
    let e1 = splitting_error(2, &fields, 0.5, 4, &probes);
    let e2 = splitting_error(2, &fields, 0.5, 8, &probes);
    assert!(e2 < 0.75 * e1, "{e1} {e2}");
    assert_eq!(flow_word(2, &fields, 0.5, 4).len(), 4 * fields.len());
}

#[test]
fn fit_finds_an_exact_field() {
    // w^2 / 4 along e2 with w = z1 vanishes on z1 = 0 and is 1 on z1 = 2
    let basis = basis_templates(2, 2);
    let stay: Vec<C64> = (0..10).flat_map(|k| [C64::new(0.0, 0.0), C64::new(0.1 * k as f64, 0.3)]).collect();
    let moving: Vec<C64> = (0..10).flat_map(|k| [C64::new(2.0, 0.0), C64::new(-0.2 * k as f64, 0.0)]).collect();
    let d = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let fitted = fit_field(&stay, &moving, &d, &basis, &FitOptions::default());
    assert!(fitted.residual < 1e-6, "{}", fitted.residual);
    let value = |x: &[C64]| fitted.fields.iter().fold(vec![C64::new(0.0, 0.0); 2], |acc, f| {
        let v = f.value(x);
        vec![acc[0] + v[0], acc[1] + v[1]]
    });
    assert!(holodense_core::point::dist(&value(&moving[..2]), &d) < 1e-6);
    assert!(holodense_core::point::norm(&value(&stay[..2])) < 1e-6);
}
