use holodense_core::labyrinth::{generate, pair_distance_lower, HyperplaneBall, LabyrinthError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn generated_labyrinths_are_sandwiched(seed in 0u64..1000, target in 0.05f64..0.9) {
        let lab = generate(2, 1.0, 2.0, target, seed).unwrap();
        let rep = lab.verify();
        prop_assert!(rep.ok, "{:?}", rep);
        prop_assert!(rep.ledger_sum >= target);
        let path = lab.empirical_shortest_path(lab.len(), 400, seed).unwrap();
        prop_assert!(path >= rep.ledger_sum, "{} < {}", path, rep.ledger_sum);
    }

    #[test]
    fn wide_shells_reach_larger_targets(seed in 0u64..1000, target in 1.0f64..6.0) {
        let lab = generate(2, 1.0, 20.0, target, seed).unwrap();
        prop_assert!(lab.verify().ok);
        prop_assert!(lab.ledger_sum() >= target);
        for k0 in 0..=lab.len() {
            prop_assert!(lab.prefix_bound(k0) <= lab.ledger_sum() + 1e-12);
        }
        let k0 = lab.prefix_for_length(target).unwrap();
        prop_assert!(lab.prefix_bound(k0) >= target);
    }

    #[test]
    fn pair_bound_is_a_lower_bound(
        w1 in prop::collection::vec(-1.0f64..1.0, 4),
        w2 in prop::collection::vec(-1.0f64..1.0, 4),
        t in prop::collection::vec(0.0f64..1.0, 8),
    ) {
        let unit = |w: &[f64]| {
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-3);
            w.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let a = HyperplaneBall::tangent(&unit(&w1), 1.2, 0.3);
        let b = HyperplaneBall::tangent(&unit(&w2), 1.6, 0.3);
        let lower = pair_distance_lower(&a, &b);
        // points on a, measured to b
        let pa = a.closest_point(&t[..4].iter().map(|x| 3.0 * x).collect::<Vec<_>>());
        prop_assert!(b.distance(&pa) + 1e-12 >= lower);
    }
}

#[test]
fn narrow_shell_caps_the_ledger() {
    match generate(2, 1.0, 2.0, 2.0, 1) {
        Err(LabyrinthError::Infeasible { achievable, .. }) => assert!(achievable < 1.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(generate(2, 1.0, 20.0, 3.0, 9).unwrap(), generate(2, 1.0, 20.0, 3.0, 9).unwrap());
    let lab = generate(3, 1.0, 20.0, 2.0, 9).unwrap();
    assert_eq!(lab.balls[0].dim(), 6);
    assert!(lab.verify().ok);
}
