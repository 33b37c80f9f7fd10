use holodense_core::engine::{dedup_targets, evaluate_stage, run, run_observed, EngineConfig, EngineKind, StageState, HIT_TOL};
use holodense_core::geometry::{sample_preset, Preset};
use holodense_core::CPoint;

fn line(targets: Vec<CPoint>) -> EngineConfig {
    EngineConfig::new(Preset::Line, 2, 32.0, 0.05, 0.5, targets, EngineKind::Main)
}

#[test]
fn zero_stages_is_the_inclusion() {
    let mut cfg = line(vec![CPoint::from_pairs(&[(0.5, 0.7), (1.2, -0.4)])]);
    cfg.stages = 0;
    let cert = run(&cfg).unwrap();
    assert!(cert.certified);
    assert!(cert.stages.is_empty() && cert.hits.is_empty());
    assert_eq!(cert.ledger, 0.0);
    assert!(cert.map().is_empty());
}

#[test]
fn duplicate_targets_collapse() {
    let a = CPoint::from_pairs(&[(0.5, 0.7), (1.2, -0.4)]);
    let b = CPoint::from_pairs(&[(-1.0, 0.3), (0.2, 1.5)]);
    assert_eq!(dedup_targets(&[a.clone(), b.clone(), a.clone()]), vec![a.clone(), b.clone()]);
    let mut cfg = line(vec![a.clone(), a]);
    assert!(cfg.validate().is_err());
    cfg.stages = 1;
    assert!(cfg.validate().is_ok());
}

#[test]
fn invalid_configs_are_rejected() {
    let a = CPoint::from_pairs(&[(0.5, 0.7), (1.2, -0.4)]);
    for eps0 in [0.0, 1.0, -0.5, f64::NAN] {
        let mut cfg = line(vec![a.clone()]);
        cfg.eps0 = eps0;
        assert!(cfg.validate().is_err(), "{eps0}");
    }
    let ball = EngineConfig::new(Preset::UnitDisk, 2, 1.2, 0.01, 0.5, vec![a], EngineKind::Ball);
    assert!(ball.validate().is_err(), "target outside the ball");
}

#[test]
fn first_stage_of_the_line_run_certifies_and_re_derives() {
    let a = CPoint::from_pairs(&[(0.5, 0.7), (1.2, -0.4)]);
    let cfg = line(vec![a.clone()]);
    let mut views = 0;
    let cert = run_observed(&cfg, &mut |v| {
        views += 1;
        assert_eq!(v.record.index, 1);
        assert!(v.before.k.is_subset_of(&v.after.k));
    })
    .unwrap();
    assert_eq!(views, 1);
    assert!(cert.certified, "{:?}", cert.stages[0].failures);
    let s = &cert.stages[0];
    assert!(s.margins.sup_i < s.eps_prev);
    assert!(s.margins.cert_bound > 1.0 / s.eps_prev);
    assert!(s.eps > 0.0 && s.eps < 0.5 * s.eps_prev);
    assert!(cert.hits[0].residual <= HIT_TOL);
    assert!(cert.map().eval(&CPoint(vec![s.b_param, 0.0.into()])).dist(&a) <= HIT_TOL);

    // re-evaluating the stored words reproduces every margin bit for bit
    let m = sample_preset(cfg.preset.clone(), cfg.n, cfg.rho_param, cfg.mesh).unwrap();
    let st = StageState::initial(&m, cfg.radii.k0_radius, cfg.eps0).unwrap();
    let (mg, next) = evaluate_stage(&m, cfg.engine, &cfg.budgets, &st, s).unwrap();
    let bits = |e: Vec<(&'static str, f64)>| e.into_iter().map(|(k, v)| (k, v.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(mg.entries()), bits(s.margins.entries()));
    assert_eq!(next.eps, s.eps);
}
