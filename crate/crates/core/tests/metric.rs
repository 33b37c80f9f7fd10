use holodense_core::geometry::{sample_preset, CompactRule, ParameterCompact, Preset};
use holodense_core::metric::{
    completeness_ledger, injectivity_margin, intrinsic_distance, refine_cell, sampled_lipschitz, PullbackGraph,
};
use holodense_core::{AffineMap, AutWord, Poly, Shear, C64};
use proptest::prelude::*;

fn bend(a: f64, b: f64) -> AutWord {
    let s = Shear::new(
        &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        Poly::new(vec![C64::new(0.0, 0.0), C64::new(a, 0.0), C64::new(0.0, b)]),
    )
    .unwrap();
    AutWord::single(s)
}

fn rings(m: &holodense_core::geometry::SampledSubmanifold, r: f64) -> Vec<usize> {
    (0..m.len()).filter(|&i| (m.param(i).norm() - r).abs() < 0.5 * m.h).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn distances_scale_with_the_map(s in 0.1f64..10.0, a in -1.0f64..1.0, b in -0.5f64..0.5) {
        let m = sample_preset(Preset::Line, 2, 1.5, 0.1).unwrap();
        let f = bend(a, b);
        let fs = f.compose(&AutWord::single(AffineMap::scaling(2, s).unwrap()));
        let g = PullbackGraph::build(&m, &f, None, 4).unwrap();
        let gs = PullbackGraph::build(&m, &fs, None, 4).unwrap();
        let (x, y) = (rings(&m, 0.3), rings(&m, 1.2));
        let d = intrinsic_distance(&g, &x, &y).unwrap();
        let ds = intrinsic_distance(&gs, &x, &y).unwrap();
        prop_assert!((ds - s * d).abs() <= 1e-12 * s * d, "{ds} vs {}", s * d);
    }

    #[test]
    fn graph_distance_dominates_chords(a in -1.0f64..1.0, b in -0.5f64..0.5) {
        let m = sample_preset(Preset::Line, 2, 1.0, 0.1).unwrap();
        let f = bend(a, b);
        let g = PullbackGraph::build(&m, &f, None, 4).unwrap();
        let d = g.distances_from(&[0]);
        let f0 = f.eval(&m.f0_sample(0));
        for (i, di) in d.iter().enumerate() {
            prop_assert!(*di + 1e-12 >= f.eval(&m.f0_sample(i)).dist(&f0));
        }
    }
}

#[test]
fn quadrature_doubling_is_converged() {
    let m = sample_preset(Preset::Line, 2, 2.0, 0.05).unwrap();
    let f = bend(0.8, 0.4);
    let (x, y) = (rings(&m, 0.5), rings(&m, 1.8));
    let d4 = intrinsic_distance(&PullbackGraph::build(&m, &f, None, 4).unwrap(), &x, &y).unwrap();
    let d8 = intrinsic_distance(&PullbackGraph::build(&m, &f, None, 8).unwrap(), &x, &y).unwrap();
    assert!((d4 - d8).abs() <= 1e-6 * d8, "{d4} {d8}");
}

#[test]
fn annulus_on_identity_and_graph_preset() {
    let h = 0.05;
    let m = sample_preset(Preset::Line, 3, 3.5, h).unwrap();
    let g = PullbackGraph::build(&m, &AutWord::identity(3), None, 4).unwrap();
    let d = intrinsic_distance(&g, &rings(&m, 1.0), &rings(&m, 3.0)).unwrap();
    assert!((d - 2.0).abs() <= 2.0 * h, "{d}");
    // a graph over the line is never shorter than the line
    let mg = sample_preset(Preset::parse("graph:0,0,0.5").unwrap(), 2, 3.5, h).unwrap();
    let gg = PullbackGraph::build(&mg, &AutWord::identity(2), None, 4).unwrap();
    assert!(intrinsic_distance(&gg, &rings(&mg, 1.0), &rings(&mg, 3.0)).unwrap() >= d);
}

#[test]
fn masked_graph_has_no_path_out() {
    let m = sample_preset(Preset::Line, 2, 1.0, 0.1).unwrap();
    let mask: Vec<bool> = (0..m.len()).map(|i| m.param(i).norm() < 0.5).collect();
    let g = PullbackGraph::build(&m, &AutWord::identity(2), Some(&mask), 4).unwrap();
    assert!(intrinsic_distance(&g, &rings(&m, 0.2), &rings(&m, 0.9)).is_err());
}

#[test]
fn refined_cell_bound_is_below_sampled_values() {
    let m = sample_preset(Preset::Line, 2, 1.0, 0.1).unwrap();
    let f = bend(1.0, 0.3);
    let value = |z: &[C64]| 5.0 - (z[0].norm_sqr() + z[1].norm_sqr()).sqrt();
    for i in (0..m.len()).step_by(17) {
        let lb = refine_cell(&m, &f, i, &value);
        assert!(lb <= value(&f.eval(&m.f0_sample(i)).0) + 1e-12);
    }
    assert!(sampled_lipschitz(&m, &f, &(0..m.len()).collect::<Vec<_>>()) >= 1.0);
}

#[test]
fn ledger_is_the_halving_sum() {
    assert_eq!(completeness_ledger(&[0.5, 0.25, 0.125, 0.0625]), 15.0);
    assert_eq!(completeness_ledger(&[]), 0.0);
}

#[test]
fn identity_embedding_is_injective() {
    let m = sample_preset(Preset::Line, 2, 1.0, 0.05).unwrap();
    let k = ParameterCompact::from_mask(&m, vec![true; m.len()], CompactRule::Explicit).unwrap();
    let rep = injectivity_margin(&m, &AutWord::identity(2), &k, 0.2);
    assert!(rep.margin > 0.0);
}
