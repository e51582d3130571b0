//! Oracle comparisons run by `validate-clt` and `validate-queue`.

use marqoe_core::channel::queue_latency;
use marqoe_core::{ChannelModel, SnrDistribution};
use marqoe_oracle::queue::{simulate_dg1, simulate_mg1};
use marqoe_oracle::report::{OracleReport, Tolerance};
use marqoe_oracle::service::ServiceSampler;
use marqoe_oracle::tail::{check_decision, compare_clt, DecisionCheck};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CLT_TOLERANCE: f64 = 0.05;
pub const CLT_BAND: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct CltCase {
    pub p_hats: Vec<f64>,
    pub rho: f64,
    pub epsilon: f64,
}

/// Random instances with `N ∈ [100, 1000]` and `Σ p(1 - p) >= 5`. The
/// required fraction sits within three standard deviations of the mean so
/// that tails are neither 0 nor 1.
pub fn clt_cases(count: usize, seed: u64) -> Vec<CltCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    while cases.len() < count {
        let n = rng.gen_range(100..=1000);
        // mix of spread-out and skewed probability profiles
        let (lo, hi) = match rng.gen_range(0..3) {
            0 => (0.0, 1.0),
            1 => (0.6, 1.0),
            _ => (0.0, 0.3),
        };
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        let var: f64 = p.iter().map(|q| q * (1.0 - q)).sum();
        if var < 5.0 {
            continue;
        }
        let mean: f64 = p.iter().sum();
        let z = rng.gen_range(-3.0..3.0);
        let rho = ((mean + z * var.sqrt()) / n as f64).clamp(1e-3, 1.0);
        cases.push(CltCase {
            p_hats: p,
            rho,
            epsilon: rng.gen_range(0.05..0.95),
        });
    }
    cases
}

#[derive(Debug, Clone)]
pub struct CltStudy {
    pub reports: Vec<OracleReport>,
    pub decisions: Vec<DecisionCheck>,
}

impl CltStudy {
    pub fn max_gap(&self) -> f64 {
        self.reports.iter().map(|r| r.abs_err).fold(0.0, f64::max)
    }

    pub fn disagreements(&self) -> usize {
        self.decisions.iter().filter(|d| !d.consistent()).count()
    }

    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass) && self.disagreements() == 0
    }
}

pub fn clt_study(count: usize, seed: u64) -> Result<CltStudy, marqoe_core::AllocError> {
    let mut reports = Vec::with_capacity(count);
    let mut decisions = Vec::with_capacity(count);
    for case in clt_cases(count, seed) {
        reports.push(compare_clt(&case.p_hats, case.rho, CLT_TOLERANCE)?);
        decisions.push(check_decision(&case.p_hats, case.rho, case.epsilon, CLT_BAND)?);
    }
    Ok(CltStudy { reports, decisions })
}

pub const QUEUE_TOLERANCE: f64 = 0.15;
pub const UTILISATIONS: [f64; 3] = [0.2, 0.5, 0.8];

#[derive(Debug, Clone)]
pub struct QueueStudy {
    /// Mean-wait formula against the periodic-arrival simulation.
    pub dg1: Vec<OracleReport>,
    /// The same formula against Poisson arrivals, for reference.
    pub mg1: Vec<OracleReport>,
}

impl QueueStudy {
    pub fn pass(&self) -> bool {
        self.dg1.iter().all(|r| r.pass)
    }
}

/// Runs both service laws of `channel` (its own SNR law and a constant SNR
/// at the same mean) at each utilisation.
pub fn queue_study(channel: &ChannelModel, arrivals: usize, seed: u64) -> anyhow::Result<QueueStudy> {
    let b = 1e6;
    let mean_snr = match channel.snr {
        SnrDistribution::Constant { snr } => snr,
        SnrDistribution::Exponential { mean, .. } => mean,
    };
    let laws = [
        (
            "deterministic",
            ChannelModel::new(SnrDistribution::Constant { snr: mean_snr }, channel.alpha_bits)?,
        ),
        (
            "exponential",
            ChannelModel::new(SnrDistribution::exponential(mean_snr), channel.alpha_bits)?,
        ),
    ];
    let mut study = QueueStudy {
        dg1: Vec::new(),
        mg1: Vec::new(),
    };
    for (name, model) in &laws {
        let moments = model.service_moments(b)?;
        let sampler = ServiceSampler::from_channel(model, b);
        for (i, &u) in UTILISATIONS.iter().enumerate() {
            let lambda = u / moments.mean;
            let formula = queue_latency(lambda, moments)?;
            let run_seed = seed.wrapping_add(i as u64);
            let dg1 = simulate_dg1(lambda, &sampler, arrivals, run_seed)?;
            let mg1 = simulate_mg1(lambda, &sampler, arrivals, run_seed)?;
            study.dg1.push(OracleReport::new(
                format!("dg1_{name}_u{u}"),
                dg1.arrivals,
                dg1.mean_wait,
                formula,
                Tolerance::Relative(QUEUE_TOLERANCE),
            ));
            study.mg1.push(OracleReport::new(
                format!("mg1_{name}_u{u}"),
                mg1.arrivals,
                mg1.mean_wait,
                formula,
                Tolerance::Relative(QUEUE_TOLERANCE),
            ));
        }
    }
    Ok(study)
}
