use marqoe_core::dtwin::build_twin;
use marqoe_core::{synthetic, PoseTrace};
use marqoe_harness::config::ExperimentConfig;
use marqoe_harness::experiments::{allocate, compare_baseline, sweep_user, AllocationRow, AGGREGATED, REALIZED, TWIN};

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.twin.hidden = 16;
    cfg.twin.max_epochs = 800;
    cfg.twin.patience = 100;
    cfg
}

fn renamed(trace: &PoseTrace, id: &str) -> PoseTrace {
    PoseTrace::new(id, trace.frame_rate(), trace.poses().to_vec()).unwrap()
}

#[test]
fn identical_users_tie_with_the_pooled_model() {
    let cfg = quick_config();
    let scene = cfg.geometry.scene().unwrap();
    let base = synthetic::oscillating("a", 300, synthetic::Oscillation::calm());
    let users = [base.clone(), renamed(&base, "b")];
    let rows = compare_baseline(&users, &scene, &cfg.twin_config(), cfg.seed).unwrap();
    assert_eq!(rows.len(), 3 * 2);
    for user in ["a", "b"] {
        let ce = |model: &str| {
            rows.iter()
                .find(|r| r.model == model && r.eval_user == user)
                .unwrap()
                .cross_entropy
        };
        let own = ce(&format!("user:{user}"));
        let pooled = ce(AGGREGATED);
        assert!(
            (own - pooled).abs() <= 0.15 * pooled,
            "user {user}: own {own} pooled {pooled}"
        );
    }
}

#[test]
fn allocation_is_independent_per_user() {
    let mut cfg = quick_config();
    cfg.requirement.per_user.insert("loose".into(), 0.6);
    cfg.requirement.per_user.insert("strict".into(), 0.9);
    let scene = cfg.geometry.scene().unwrap();
    let channel = cfg.channel.model().unwrap();
    let base = synthetic::linear_sweep("base", 300);
    let twin = build_twin(&base, &scene, &cfg.twin_config()).unwrap();

    let ids = ["a", "b", "loose", "strict"];
    let users: Vec<PoseTrace> = ids.iter().map(|id| renamed(&base, id)).collect();
    let twins: Vec<_> = ids
        .iter()
        .map(|id| {
            let mut t = twin.clone();
            t.user_id = id.to_string();
            t
        })
        .collect();
    let summary = allocate(&users, &twins, &cfg, &channel);
    assert!(summary.failures.is_empty());
    let rows = AllocationRow::rows(&summary);
    let b = |id: &str| rows.iter().find(|r| r.user_id == id).unwrap().b_star_hz.unwrap();
    assert_eq!(rows.iter().map(|r| r.user_id.as_str()).collect::<Vec<_>>(), ids);
    assert_eq!(b("a"), b("b"));
    assert!(b("strict") >= b("loose"), "strict {} loose {}", b("strict"), b("loose"));
    let total: f64 = ids.iter().map(|id| b(id)).sum();
    assert_eq!(summary.total_spectrum, total);

    let pair = allocate(&users[..2], &twins[..2], &cfg, &channel);
    assert_eq!(pair.total_spectrum, 2.0 * b("a"));
    let single = allocate(&users[..1], &twins[..1], &cfg, &channel);
    assert_eq!(single.total_spectrum, b("a"));
}

#[test]
fn sweep_reports_both_sources_per_frequency() {
    let cfg = quick_config();
    let scene = cfg.geometry.scene().unwrap();
    let trace = synthetic::linear_sweep("lin", 200);
    let twin = build_twin(&trace, &scene, &cfg.twin_config()).unwrap();
    let lambdas = [1.0, 3.0, 30.0];
    let sweep = sweep_user(&trace, &twin, &scene, &lambdas).unwrap();
    for source in [REALIZED, TWIN] {
        let curve = sweep.curve(source);
        assert_eq!(curve.iter().map(|p| p.0).collect::<Vec<_>>(), lambdas);
        assert!(curve.iter().all(|p| (0.0..=1.0).contains(&p.1)));
    }
    for lambda in lambdas {
        let mass: f64 = sweep
            .distribution
            .iter()
            .filter(|m| m.lambda == lambda && m.source == TWIN)
            .map(|m| m.probability)
            .sum();
        assert!((mass - 1.0).abs() < 1e-9, "λ {lambda}: {mass}");
    }
}
