use marqoe_core::channel::queue_latency;
use marqoe_core::{synthetic, ChannelModel, PredictorConfig, QoeRequirement, Scene, SnrDistribution};
use marqoe_oracle::queue::{simulate_dg1, simulate_mg1};
use marqoe_oracle::replay::{replay_constraint, ReplaySetup};
use marqoe_oracle::service::{monte_carlo_moments, ServiceSampler};
use marqoe_oracle::tail::{check_decision, compare_clt};
use proptest::prelude::*;

fn channels() -> Vec<ChannelModel> {
    let mut out = vec![ChannelModel::new(SnrDistribution::Constant { snr: 7.0 }, 1e5).unwrap()];
    for mean in [1.0, 10.0, 100.0] {
        out.push(ChannelModel::new(SnrDistribution::exponential(mean), 1e5).unwrap());
    }
    out
}

#[test]
fn simpson_moments_agree_with_core() {
    for model in channels() {
        for b in [1e5, 2.5e6] {
            let core = model.service_moments(b).unwrap();
            let (mean, second) = ServiceSampler::from_channel(&model, b).moments();
            assert!(
                (mean - core.mean).abs() <= 1e-8 * core.mean,
                "{:?} b={b}: {mean} vs {}",
                model.snr,
                core.mean
            );
            assert!(
                (second - core.second).abs() <= 1e-8 * core.second,
                "{:?} b={b}: {second} vs {}",
                model.snr,
                core.second
            );
        }
    }
}

#[test]
fn monte_carlo_moments_bracket_core() {
    for model in channels() {
        let core = model.service_moments(1e6).unwrap();
        let est = monte_carlo_moments(&ServiceSampler::from_channel(&model, 1e6), 200_000, 3);
        assert!(
            (est.mean - core.mean).abs() <= 4.0 * est.mean_se + 1e-9 * core.mean,
            "{:?}",
            model.snr
        );
        assert!(
            (est.second - core.second).abs() <= 4.0 * est.second_se + 1e-9 * core.second,
            "{:?}",
            model.snr
        );
    }
}

#[test]
fn waiting_time_formula_matches_poisson_arrivals() {
    let model = ChannelModel::new(SnrDistribution::exponential(10.0), 1e5).unwrap();
    let b = 1e6;
    let moments = model.service_moments(b).unwrap();
    let sampler = ServiceSampler::from_channel(&model, b);
    for u in [0.2, 0.5] {
        let lambda = u / moments.mean;
        let sim = simulate_mg1(lambda, &sampler, 400_000, 9).unwrap();
        let formula = queue_latency(lambda, moments).unwrap();
        assert!(
            (sim.mean_wait - formula).abs() <= 5.0 * sim.wait_std_error.max(0.01 * formula),
            "u={u}: {} vs {formula}",
            sim.mean_wait
        );
        assert!((sim.utilisation - u).abs() < 0.01);
    }
}

#[test]
fn periodic_arrivals_with_fixed_service_never_wait() {
    let sampler = ServiceSampler::Deterministic(0.02);
    let sim = simulate_dg1(40.0, &sampler, 20_000, 1).unwrap();
    assert_eq!(sim.mean_wait, 0.0);
    assert!((sim.mean_sojourn - 0.02).abs() < 1e-12);
    assert!(simulate_dg1(60.0, &sampler, 20_000, 1).is_err());
}

#[test]
fn simulations_are_seed_deterministic() {
    let model = ChannelModel::new(SnrDistribution::exponential(10.0), 1e5).unwrap();
    let sampler = ServiceSampler::from_channel(&model, 1e6);
    let lambda = 0.5 / model.service_moments(1e6).unwrap().mean;
    assert_eq!(
        simulate_mg1(lambda, &sampler, 20_000, 4).unwrap(),
        simulate_mg1(lambda, &sampler, 20_000, 4).unwrap()
    );
    assert_ne!(
        simulate_mg1(lambda, &sampler, 20_000, 4).unwrap(),
        simulate_mg1(lambda, &sampler, 20_000, 5).unwrap()
    );
}

fn requirement() -> QoeRequirement {
    QoeRequirement {
        vchr_threshold: 0.8,
        rho: 0.9,
        epsilon: 0.9,
    }
}

#[test]
fn replay_is_deterministic_and_tracks_spectrum() {
    let trace = synthetic::linear_sweep("lin", 150);
    let scene = Scene::default();
    let channel = ChannelModel::new(SnrDistribution::exponential(10.0), 1e5).unwrap();
    let predictor = PredictorConfig::default();
    let setup = ReplaySetup {
        trace: &trace,
        scene: &scene,
        channel: &channel,
        predictor: &predictor,
        requirement: requirement(),
        max_latency: 0.05,
    };
    let a = replay_constraint(&setup, 2e6, 1000, 21).unwrap();
    assert_eq!(a, replay_constraint(&setup, 2e6, 1000, 21).unwrap());
    assert!(a.ci_low <= a.probability && a.probability <= a.ci_high);
    // plenty of spectrum: fast uploads keep the frames on target despite the odd late upload
    assert!(a.probability > 0.99, "{a:?}");

    // no stride meets the latency bound
    let starved = replay_constraint(&setup, 1e4, 1000, 21).unwrap();
    assert_eq!(starved.lambda, None);
    assert_eq!(starved.successes, 0);
    assert!(replay_constraint(&setup, 2e6, 10, 21).is_err());
}

#[test]
fn still_viewer_always_succeeds() {
    let trace = synthetic::constant("still", 120, synthetic::viewer_pose());
    let scene = Scene::default();
    let channel = ChannelModel::new(SnrDistribution::exponential(10.0), 1e5).unwrap();
    let predictor = PredictorConfig::default();
    let setup = ReplaySetup {
        trace: &trace,
        scene: &scene,
        channel: &channel,
        predictor: &predictor,
        requirement: requirement(),
        max_latency: 0.05,
    };
    let r = replay_constraint(&setup, 5e5, 1000, 2).unwrap();
    assert_eq!(r.successes, r.replays);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (100usize..400)
        .prop_flat_map(|n| (prop::collection::vec(0.02f64..0.98, n), -3.0f64..3.0, 0.05f64..0.95))
        .prop_map(|(p, z, eps)| {
            let mean: f64 = p.iter().sum();
            let sd = p.iter().map(|q| q * (1.0 - q)).sum::<f64>().sqrt();
            let rho = ((mean + z * sd) / p.len() as f64).clamp(0.0, 1.0);
            (p, rho, eps)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clt_decision_agrees_outside_the_band((p, rho, eps) in instance()) {
        let d = check_decision(&p, rho, eps, 0.05).unwrap();
        prop_assert!(d.consistent(), "{d:?}");
    }

    #[test]
    fn clt_report_is_symmetric_in_its_error((p, rho, _eps) in instance()) {
        let r = compare_clt(&p, rho, 0.05).unwrap();
        prop_assert!((r.abs_err - (r.reference - r.approx).abs()).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&r.reference) && (0.0..=1.0).contains(&r.approx));
    }
}
