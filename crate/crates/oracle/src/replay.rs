//! Monte Carlo replay of the upload and render pipeline at a fixed
//! spectrum, estimating how often the frame-fraction requirement holds.
//!
//! The upload frequency is chosen from the expected service moments as the
//! allocator does. Each replay then draws an SNR per upload, runs the FIFO
//! queue, and drops from the server's history every upload whose waiting
//! time exceeds `T`. Render poses come from the deployed predictor on what
//! survives, falling back to the newest received pose when a whole history
//! window is lost.

use std::collections::BTreeSet;

use marqoe_core::allocator::QoeRequirement;
use marqoe_core::prediction::{DeployedPredictor, PoseHistory, PosePredictor, PredictorConfig};
use marqoe_core::{ChannelModel, PoseTrace, Scene};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::jaccard::{cells, jaccard};
use crate::service::ServiceSampler;
use crate::OracleError;

pub const MIN_REPLAYS: usize = 1_000;

#[derive(Debug, Clone)]
pub struct ReplaySetup<'a> {
    pub trace: &'a PoseTrace,
    pub scene: &'a Scene,
    pub channel: &'a ChannelModel,
    pub predictor: &'a PredictorConfig,
    pub requirement: QoeRequirement,
    pub max_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub b: f64,
    pub lambda: Option<f64>,
    pub stride: Option<usize>,
    pub replays: usize,
    pub successes: usize,
    pub probability: f64,
    /// 95% Wilson score interval for `probability`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_drop_fraction: f64,
    pub mean_hit_fraction: f64,
}

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let centre = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Largest `fr / s` whose mean waiting time `λE[S²] / (2(1 - λE[S]))`
/// stays within `T`.
pub fn feasible_stride(moments: (f64, f64), max_latency: f64, frame_rate: f64, max_stride: usize) -> Option<usize> {
    let (m1, m2) = moments;
    (1..=max_stride.max(1)).find(|&s| {
        let lambda = frame_rate / s as f64;
        let u = lambda * m1;
        u < 1.0 && lambda * m2 / (2.0 * (1.0 - u)) <= max_latency
    })
}

struct Prepared {
    stride: usize,
    lookahead: usize,
    uploads: Vec<usize>,
    frames: Vec<usize>,
    actual: Vec<BTreeSet<usize>>,
    /// Hit flag per render frame with no drops; `None` where VCHR is undefined.
    baseline: Vec<Option<bool>>,
}

impl ReplaySetup<'_> {
    fn hit(&self, frame_idx: usize, prep: &Prepared, dropped: Option<&[bool]>) -> Result<Option<bool>, OracleError> {
        let g = prep.frames[frame_idx];
        let predicted = if g < prep.lookahead {
            None
        } else {
            let f = g - prep.lookahead;
            let lo = (f + 1).saturating_sub(self.predictor.history_window);
            let received: Vec<usize> = prep
                .uploads
                .iter()
                .enumerate()
                .filter(|&(i, &k)| k <= f && !dropped.is_some_and(|d| d[i]))
                .map(|(_, &k)| k)
                .collect();
            let mut entries: Vec<_> = received
                .iter()
                .filter(|&&k| k >= lo)
                .map(|&k| (k, self.trace.poses()[k]))
                .collect();
            // whole window lost: hold the newest pose the server has
            if entries.is_empty() {
                entries.extend(received.last().map(|&k| (k, self.trace.poses()[k])));
            }
            let history = PoseHistory {
                query_frame: f,
                stride: prep.stride,
                entries,
            };
            DeployedPredictor(self.predictor.method).predict(&history, prep.lookahead)
        };
        let predicted_cells = match predicted {
            Some(p) => cells(&self.scene.visible(&p)?),
            None => BTreeSet::new(),
        };
        Ok(jaccard(&prep.actual[frame_idx], &predicted_cells).map(|h| h >= self.requirement.vchr_threshold))
    }

    fn prepare(&self, stride: usize) -> Result<Prepared, OracleError> {
        let len = self.trace.len();
        let frames: Vec<usize> = self.predictor.render_frames(len).collect();
        if frames.is_empty() {
            return Err(OracleError::Input("trace has no render frames".into()));
        }
        let actual = frames
            .iter()
            .map(|&g| Ok(cells(&self.scene.visible(&self.trace.poses()[g])?)))
            .collect::<Result<Vec<_>, OracleError>>()?;
        let mut prep = Prepared {
            stride,
            lookahead: self.predictor.lookahead_frames(stride),
            uploads: (0..len).step_by(stride).collect(),
            frames,
            actual,
            baseline: Vec::new(),
        };
        prep.baseline = (0..prep.frames.len())
            .map(|i| self.hit(i, &prep, None))
            .collect::<Result<_, _>>()?;
        Ok(prep)
    }

    /// One replay: returns (requirement met, fraction dropped, hit fraction).
    fn replay_once(
        &self,
        prep: &Prepared,
        sampler: &ServiceSampler,
        seed: u64,
        index: u64,
    ) -> Result<(bool, f64, f64), OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let gap = prep.stride as f64 / self.trace.frame_rate();
        let mut dropped = Vec::with_capacity(prep.uploads.len());
        let mut wait = 0.0;
        for _ in &prep.uploads {
            dropped.push(wait > self.max_latency);
            let service = sampler.sample(&mut rng);
            wait = f64::max(0.0, wait + service - gap);
        }
        let any_dropped = dropped.iter().any(|&d| d);
        let (mut hits, mut defined) = (0usize, 0usize);
        for i in 0..prep.frames.len() {
            let g = prep.frames[i];
            let touched = any_dropped && g >= prep.lookahead && {
                let f = g - prep.lookahead;
                let lo = (f + 1).saturating_sub(self.predictor.history_window);
                prep.uploads.iter().zip(&dropped).any(|(&k, &d)| d && k >= lo && k <= f)
            };
            let hit = if touched {
                self.hit(i, prep, Some(&dropped))?
            } else {
                prep.baseline[i]
            };
            if let Some(h) = hit {
                defined += 1;
                hits += h as usize;
            }
        }
        let drop_fraction = dropped.iter().filter(|&&d| d).count() as f64 / dropped.len() as f64;
        let hit_fraction = if defined > 0 { hits as f64 / defined as f64 } else { 1.0 };
        let met = hits as f64 >= self.requirement.rho * defined as f64 - 1e-9;
        Ok((met, drop_fraction, hit_fraction))
    }
}

/// Empirical probability that at least a fraction `ρ` of render frames
/// reach VCHR `V` at spectrum `b`.
pub fn replay_constraint(
    setup: &ReplaySetup,
    b: f64,
    n_replays: usize,
    seed: u64,
) -> Result<ReplayReport, OracleError> {
    if n_replays < MIN_REPLAYS {
        return Err(OracleError::Input(format!(
            "need at least {MIN_REPLAYS} replays, got {n_replays}"
        )));
    }
    if b.is_nan() || b <= 0.0 {
        return Err(OracleError::Input(format!("spectrum must be positive, got {b}")));
    }
    let sampler = ServiceSampler::from_channel(setup.channel, b);
    let frame_rate = setup.trace.frame_rate();
    let Some(stride) = feasible_stride(sampler.moments(), setup.max_latency, frame_rate, setup.trace.len()) else {
        let (ci_low, ci_high) = wilson_interval(0, n_replays, 1.96);
        return Ok(ReplayReport {
            b,
            lambda: None,
            stride: None,
            replays: n_replays,
            successes: 0,
            probability: 0.0,
            ci_low,
            ci_high,
            mean_drop_fraction: 1.0,
            mean_hit_fraction: 0.0,
        });
    };
    let prep = setup.prepare(stride)?;
    let outcomes = (0..n_replays as u64)
        .into_par_iter()
        .map(|i| setup.replay_once(&prep, &sampler, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    let successes = outcomes.iter().filter(|o| o.0).count();
    let n = n_replays as f64;
    let (ci_low, ci_high) = wilson_interval(successes, n_replays, 1.96);
    Ok(ReplayReport {
        b,
        lambda: Some(frame_rate / stride as f64),
        stride: Some(stride),
        replays: n_replays,
        successes,
        probability: successes as f64 / n,
        ci_low,
        ci_high,
        mean_drop_fraction: outcomes.iter().map(|o| o.1).sum::<f64>() / n,
        mean_hit_fraction: outcomes.iter().map(|o| o.2).sum::<f64>() / n,
    })
}
