//! Experiments behind the CLI subcommands, usable directly from tests.

use std::sync::Arc;

use marqoe_core::allocator::{allocate_all, AllocationSummary, QoeRequirement, UserDemand};
use marqoe_core::dtwin::{
    build_twin, fit_qoe, generate_training_set, holdout_split, vchr_bin, TrainingSample, TwinBundle, TwinConfig,
};
use marqoe_core::pipeline::{evaluate_frequency, mean_vchr, ActualVisibility};
use marqoe_core::prediction::{deployed_training_pairs, fit_clone, predict_render_frame, DeployedPredictor};
use marqoe_core::trace::downsample;
use marqoe_core::{ChannelModel, PoseTrace, Scene};
use marqoe_oracle::replay::{replay_constraint, ReplayReport, ReplaySetup};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};

/// Trains one twin per user, in parallel; output order follows `users`.
pub fn train_twins(
    users: &[PoseTrace],
    scene: &Scene,
    config: &TwinConfig,
) -> Result<Vec<TwinBundle>, marqoe_core::Error> {
    users.par_iter().map(|u| build_twin(u, scene, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub user_id: String,
    pub lambda: f64,
    pub source: &'static str,
    pub mean_vchr: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelMass {
    pub user_id: String,
    pub lambda: f64,
    pub source: &'static str,
    pub level: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserSweep {
    pub points: Vec<SweepPoint>,
    pub distribution: Vec<LevelMass>,
}

impl UserSweep {
    pub fn curve(&self, source: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.source == source)
            .map(|p| (p.lambda, p.mean_vchr))
            .collect()
    }
}

pub const REALIZED: &str = "realized";
pub const TWIN: &str = "twin";

/// Mean VCHR per upload frequency, realized by the deployed pipeline and
/// predicted by the twin, with the VCHR level distribution of each.
pub fn sweep_user(
    trace: &PoseTrace,
    twin: &TwinBundle,
    scene: &Scene,
    lambdas: &[f64],
) -> Result<UserSweep, marqoe_core::Error> {
    let shared = Arc::new(trace.clone());
    let actual = ActualVisibility::new(trace, scene)?;
    let config = &twin.predictor;
    let bins = twin.qoe.bins;
    let frames: Vec<usize> = config.render_frames(trace.len()).collect();
    let user_id = trace.user_id().to_string();
    let mut out = UserSweep::default();
    for &lambda in lambdas {
        let deployed = DeployedPredictor(config.method);
        let outcomes = evaluate_frequency(
            &shared,
            &actual,
            scene,
            &deployed,
            config,
            lambda,
            frames.iter().copied(),
        )?;
        let mut realized_hist = vec![0.0; bins + 1];
        let defined: Vec<f64> = outcomes.iter().filter_map(|o| o.vchr).collect();
        for &h in &defined {
            realized_hist[vchr_bin(h, bins)] += 1.0 / defined.len() as f64;
        }
        out.points.push(SweepPoint {
            user_id: user_id.clone(),
            lambda,
            source: REALIZED,
            mean_vchr: mean_vchr(&outcomes).unwrap_or(f64::NAN),
            frames: defined.len(),
        });

        let sampled = downsample(shared.clone(), lambda)?;
        let mut twin_hist = vec![0.0; bins + 1];
        for &g in &frames {
            match predict_render_frame(&twin.clone, &sampled, g, config)? {
                Some(pose) => {
                    for (acc, p) in twin_hist.iter_mut().zip(twin.qoe.distribution(lambda, &pose)) {
                        *acc += p;
                    }
                }
                None => twin_hist[0] += 1.0,
            }
        }
        twin_hist.iter_mut().for_each(|p| *p /= frames.len() as f64);
        out.points.push(SweepPoint {
            user_id: user_id.clone(),
            lambda,
            source: TWIN,
            mean_vchr: twin_hist.iter().enumerate().map(|(k, p)| twin.qoe.level(k) * p).sum(),
            frames: frames.len(),
        });

        for (source, hist) in [(REALIZED, &realized_hist), (TWIN, &twin_hist)] {
            for (k, &p) in hist.iter().enumerate() {
                out.distribution.push(LevelMass {
                    user_id: user_id.clone(),
                    lambda,
                    source,
                    level: twin.qoe.level(k),
                    probability: p,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRow {
    /// `user:<id>` for a per-user model, `aggregated` for the pooled one.
    pub model: String,
    pub eval_user: String,
    pub cross_entropy: f64,
    pub accuracy: f64,
    pub samples: usize,
}

pub const AGGREGATED: &str = "aggregated";

/// Labelled frames of one user, split into (train, holdout).
pub fn user_samples(
    trace: &PoseTrace,
    scene: &Scene,
    config: &TwinConfig,
    split_seed: u64,
) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>), marqoe_core::Error> {
    let pairs = deployed_training_pairs(trace, &config.frequencies, &config.predictor)?;
    let clone = fit_clone(&pairs, config.predictor.method)?;
    let samples = generate_training_set(
        trace,
        scene,
        &clone,
        &config.frequencies,
        &config.predictor,
        config.qoe.bins,
    )?;
    let (holdout, train) = holdout_split(samples.len(), config.qoe.holdout_fraction, split_seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&train), pick(&holdout)))
}

/// Per-user QoE models against one model trained on every user's frames,
/// each evaluated on every user's holdout frames.
pub fn compare_baseline(
    users: &[PoseTrace],
    scene: &Scene,
    config: &TwinConfig,
    seed: u64,
) -> anyhow::Result<Vec<BaselineRow>> {
    if users.len() < 2 {
        anyhow::bail!(ConfigError(format!(
            "compare-baseline needs at least two users, got {}",
            users.len()
        )));
    }
    let splits = users
        .par_iter()
        .enumerate()
        .map(|(i, u)| user_samples(u, scene, config, seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled: Vec<TrainingSample> = splits.iter().flat_map(|(train, _)| train.iter().cloned()).collect();

    let mut jobs: Vec<(String, &[TrainingSample])> = users
        .iter()
        .zip(&splits)
        .map(|(u, (train, _))| (format!("user:{}", u.user_id()), train.as_slice()))
        .collect();
    jobs.push((AGGREGATED.to_string(), pooled.as_slice()));
    let models = jobs
        .par_iter()
        .map(|(name, train)| fit_qoe(name, train, &config.qoe).map(|(m, _)| (name.clone(), m)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(marqoe_core::Error::from)?;

    let mut rows = Vec::new();
    for (name, model) in &models {
        for (u, (_, holdout)) in users.iter().zip(&splits) {
            rows.push(BaselineRow {
                model: name.clone(),
                eval_user: u.user_id().to_string(),
                cross_entropy: model.cross_entropy(holdout),
                accuracy: model.accuracy(holdout),
                samples: holdout.len(),
            });
        }
    }
    Ok(rows)
}

/// One CSV row per user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationRow {
    pub user_id: String,
    pub b_star_hz: Option<f64>,
    pub lambda_star_hz: Option<f64>,
    pub lhs: Option<f64>,
    pub phi_inv: f64,
    pub feasible: bool,
}

impl AllocationRow {
    pub fn rows(summary: &AllocationSummary) -> Vec<Self> {
        summary
            .results
            .iter()
            .map(|r| Self {
                user_id: r.user_id.clone(),
                b_star_hz: r.b_star,
                lambda_star_hz: r.lambda_star,
                lhs: r.lhs,
                phi_inv: r.phi_inv,
                feasible: r.feasible,
            })
            .collect()
    }
}

pub fn demands(users: &[PoseTrace], twins: &[TwinBundle], cfg: &ExperimentConfig) -> Vec<UserDemand> {
    users
        .iter()
        .zip(twins)
        .map(|(trace, twin)| UserDemand {
            twin: twin.clone(),
            trace: trace.clone(),
            render_frames: twin.predictor.render_frames(trace.len()).collect(),
            requirement: cfg.requirement.for_user(trace.user_id()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub user_id: String,
    pub b_hz: f64,
    pub lambda_hz: Option<f64>,
    pub replays: usize,
    pub probability: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_drop_fraction: f64,
    pub epsilon: f64,
    pub required: f64,
    pub pass: bool,
}

impl ValidationRow {
    pub fn new(user_id: &str, req: &QoeRequirement, band: f64, report: &ReplayReport) -> Self {
        let required = req.epsilon - band;
        Self {
            user_id: user_id.to_string(),
            b_hz: report.b,
            lambda_hz: report.lambda,
            replays: report.replays,
            probability: report.probability,
            ci_low: report.ci_low,
            ci_high: report.ci_high,
            mean_drop_fraction: report.mean_drop_fraction,
            epsilon: req.epsilon,
            required,
            pass: report.probability >= required,
        }
    }
}

/// Replays every feasible allocation at its `b*`.
pub fn validate_allocations(
    users: &[PoseTrace],
    summary: &AllocationSummary,
    cfg: &ExperimentConfig,
    scene: &Scene,
    channel: &ChannelModel,
    seed: u64,
) -> anyhow::Result<Vec<ValidationRow>> {
    let mut rows = Vec::new();
    for result in &summary.results {
        let Some(b) = result.b_star else { continue };
        let trace = users
            .iter()
            .find(|u| u.user_id() == result.user_id)
            .ok_or_else(|| anyhow::anyhow!("no trace for user {}", result.user_id))?;
        let setup = ReplaySetup {
            trace,
            scene,
            channel,
            predictor: &cfg.prediction,
            requirement: result.requirement,
            max_latency: cfg.channel.max_latency,
        };
        let report = replay_constraint(&setup, b, cfg.sweep.replays, seed)?;
        rows.push(ValidationRow::new(
            &result.user_id,
            &result.requirement,
            cfg.sweep.validation_band,
            &report,
        ));
    }
    Ok(rows)
}

pub fn allocate(
    users: &[PoseTrace],
    twins: &[TwinBundle],
    cfg: &ExperimentConfig,
    channel: &ChannelModel,
) -> AllocationSummary {
    allocate_all(&demands(users, twins, cfg), channel, &cfg.sweep_params())
}
