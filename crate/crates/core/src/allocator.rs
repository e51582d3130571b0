//! Chance-constrained minimum-spectrum allocation.
//!
//! The requirement "at least a fraction `ρ` of rendered frames reach VCHR
//! `V`, with probability at least `ε`" is tested through the normal
//! approximation of the Poisson-binomial count of hit frames:
//!
//! ```text
//! (N ρ - Σ p̂) / sqrt(Σ p̂ (1 - p̂))  <=  Φ⁻¹(1 - ε)
//! ```
//!
//! and spectrum is swept upward in fixed steps until the test passes.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{max_upload_frequency_from_moments, ChannelModel};
use crate::dtwin::TwinBundle;
use crate::prediction::predict_render_frame;
use crate::trace::{downsample, PoseTrace};
use crate::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AllocError {
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
    #[error("estimated hit probability {0} outside [0, 1]")]
    HitProbability(f64),
    #[error("no frames to evaluate")]
    NoFrames,
    #[error("invalid requirement: {0}")]
    Requirement(String),
    #[error("invalid sweep: {0}")]
    Sweep(String),
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ⁻¹(p)`: Acklam's rational approximation followed by one Newton step
/// on `Φ(x) - p`.
pub fn inverse_normal_cdf(p: f64) -> Result<f64, AllocError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AllocError::Probability(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(x - (normal_cdf(x) - p) / density)
}

/// Smallest integer count `>= N ρ`.
pub fn required_count(n: usize, rho: f64) -> usize {
    // absorb representation error in products like 3 * (2/3)
    ((n as f64 * rho) - 1e-9).ceil().max(0.0) as usize
}

/// Outcome of evaluating the reliability test on a vector of `p̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConstraintEval {
    /// Standardised deficit `(N ρ - Σ p̂) / σ`.
    Clt { lhs: f64 },
    /// Every `p̂` is 0 or 1, so the count is deterministic.
    Degenerate { certain_hits: usize, required: usize },
}

impl ConstraintEval {
    pub fn satisfied(&self, phi_inv: f64) -> bool {
        match *self {
            ConstraintEval::Clt { lhs } => lhs <= phi_inv,
            ConstraintEval::Degenerate { certain_hits, required } => certain_hits >= required,
        }
    }

    /// The standardised deficit, with `∓∞` standing in for a degenerate
    /// count that does or does not meet the requirement.
    pub fn lhs(&self) -> f64 {
        match *self {
            ConstraintEval::Clt { lhs } => lhs,
            ConstraintEval::Degenerate { certain_hits, required } => {
                if certain_hits >= required {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

fn check_probabilities(p_hats: &[f64]) -> Result<(), AllocError> {
    if p_hats.is_empty() {
        return Err(AllocError::NoFrames);
    }
    match p_hats.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&p) => Err(AllocError::HitProbability(p)),
        None => Ok(()),
    }
}

pub fn clt_constraint_lhs(p_hats: &[f64], rho: f64) -> Result<ConstraintEval, AllocError> {
    check_probabilities(p_hats)?;
    let n = p_hats.len();
    let variance: f64 = p_hats.iter().map(|p| p * (1.0 - p)).sum();
    if variance == 0.0 {
        return Ok(ConstraintEval::Degenerate {
            certain_hits: p_hats.iter().filter(|&&p| p == 1.0).count(),
            required: required_count(n, rho),
        });
    }
    let mean: f64 = p_hats.iter().sum();
    Ok(ConstraintEval::Clt {
        lhs: (n as f64 * rho - mean) / variance.sqrt(),
    })
}

/// Exact `P(S >= k)` for `S` a sum of independent Bernoulli(`p_i`), by
/// convolving one frame at a time.
pub fn poisson_binomial_tail(p: &[f64], k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > p.len() {
        return 0.0;
    }
    let mut dist = vec![0.0; p.len() + 1];
    dist[0] = 1.0;
    for (i, &pi) in p.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            dist[j] = dist[j] * (1.0 - pi) + dist[j - 1] * pi;
        }
        dist[0] *= 1.0 - pi;
    }
    dist[k..].iter().sum::<f64>().min(1.0)
}

/// Exact probability that at least `⌈N ρ⌉` frames hit.
pub fn exact_tail(p_hats: &[f64], rho: f64) -> Result<f64, AllocError> {
    check_probabilities(p_hats)?;
    Ok(poisson_binomial_tail(p_hats, required_count(p_hats.len(), rho)))
}

/// Normal approximation of the same probability, `1 - Φ(lhs)`.
pub fn normal_tail(eval: &ConstraintEval) -> f64 {
    match eval {
        ConstraintEval::Clt { lhs } => 1.0 - normal_cdf(*lhs),
        ConstraintEval::Degenerate { certain_hits, required } => {
            if certain_hits >= required {
                1.0
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeRequirement {
    /// `V_u`: per-frame VCHR threshold.
    pub vchr_threshold: f64,
    /// `ρ`: fraction of frames that must reach the threshold.
    pub rho: f64,
    /// `ε`: required probability of meeting the fraction.
    pub epsilon: f64,
}

impl QoeRequirement {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(0.0..=1.0).contains(&self.vchr_threshold) {
            return Err(AllocError::Requirement(format!(
                "V = {} outside [0, 1]",
                self.vchr_threshold
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(AllocError::Requirement(format!("rho = {} outside (0, 1]", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(AllocError::Requirement(format!(
                "epsilon = {} outside (0, 1)",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// `Φ⁻¹(1 - ε)`.
    pub fn phi_inv(&self) -> Result<f64, AllocError> {
        inverse_normal_cdf(1.0 - self.epsilon)
    }
}

/// Spectrum sweep `b_min, b_min + δ, ...` up to `b_max`, with upload
/// latency limit `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub b_min: f64,
    pub b_max: f64,
    pub delta: f64,
    pub max_latency: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            b_min: 1e5,
            b_max: 5e7,
            delta: 1e5,
            max_latency: 0.1,
        }
    }
}

impl SweepParams {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.b_min > 0.0 && self.b_min <= self.b_max && self.b_max.is_finite()) {
            return Err(AllocError::Sweep(format!(
                "need 0 < b_min <= b_max, got {} and {}",
                self.b_min, self.b_max
            )));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(AllocError::Sweep(format!("delta must be positive, got {}", self.delta)));
        }
        if self.max_latency.is_nan() || self.max_latency <= 0.0 {
            return Err(AllocError::Sweep(format!(
                "T must be positive, got {}",
                self.max_latency
            )));
        }
        Ok(())
    }

    /// Grid points in sweep order.
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let steps = ((self.b_max - self.b_min) / self.delta + 1e-9).floor() as usize;
        (0..=steps).map(move |i| self.b_min + i as f64 * self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub b: f64,
    pub lambda: Option<f64>,
    pub lhs: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub user_id: String,
    pub feasible: bool,
    pub b_star: Option<f64>,
    pub lambda_star: Option<f64>,
    pub stride: Option<usize>,
    /// Left-hand side at `b_star` (or at the last evaluated point).
    pub lhs: Option<f64>,
    pub phi_inv: f64,
    pub requirement: QoeRequirement,
    pub p_hats: Vec<f64>,
    pub trail: Vec<SweepStep>,
}

/// `p̂` for every render frame at one upload frequency.
pub fn hit_probabilities(
    twin: &TwinBundle,
    trace: &Arc<PoseTrace>,
    lambda: f64,
    threshold: f64,
    frames: &[usize],
) -> Result<Vec<f64>, Error> {
    let sampled = downsample(trace.clone(), lambda)?;
    frames
        .iter()
        .map(|&g| {
            let predicted = predict_render_frame(&twin.clone, &sampled, g, &twin.predictor)?;
            Ok(predicted.map_or(0.0, |q| twin.qoe.hit_probability(lambda, &q, threshold)))
        })
        .collect()
}

/// Sweeps spectrum upward from `b_min` and returns the first grid point at
/// which the twin's hit probabilities pass the reliability test.
pub fn qoe_csp(
    twin: &TwinBundle,
    trace: &PoseTrace,
    render_frames: &[usize],
    channel: &ChannelModel,
    req: &QoeRequirement,
    sweep: &SweepParams,
) -> Result<AllocationResult, Error> {
    if render_frames.is_empty() {
        return Err(AllocError::NoFrames.into());
    }
    req.validate()?;
    sweep.validate()?;
    let unit = channel.unit_moments()?;
    let phi_inv = req.phi_inv()?;
    let shared = Arc::new(trace.clone());

    let mut by_stride: HashMap<usize, (Vec<f64>, ConstraintEval)> = HashMap::new();
    let mut trail = Vec::new();
    let mut last: Option<(f64, Vec<f64>)> = None;
    for b in sweep.grid() {
        let upload =
            max_upload_frequency_from_moments(unit.scaled(b), sweep.max_latency, trace.frame_rate(), trace.len());
        let Some(upload) = upload else {
            trail.push(SweepStep {
                b,
                lambda: None,
                lhs: None,
                satisfied: false,
            });
            continue;
        };
        if let Entry::Vacant(slot) = by_stride.entry(upload.stride) {
            let p_hats = hit_probabilities(twin, &shared, upload.lambda, req.vchr_threshold, render_frames)?;
            let eval = clt_constraint_lhs(&p_hats, req.rho)?;
            slot.insert((p_hats, eval));
        }
        let (p_hats, eval) = &by_stride[&upload.stride];
        let satisfied = eval.satisfied(phi_inv);
        trail.push(SweepStep {
            b,
            lambda: Some(upload.lambda),
            lhs: Some(eval.lhs()),
            satisfied,
        });
        if satisfied {
            return Ok(AllocationResult {
                user_id: twin.user_id.clone(),
                feasible: true,
                b_star: Some(b),
                lambda_star: Some(upload.lambda),
                stride: Some(upload.stride),
                lhs: Some(eval.lhs()),
                phi_inv,
                requirement: *req,
                p_hats: p_hats.clone(),
                trail,
            });
        }
        last = Some((eval.lhs(), p_hats.clone()));
    }
    let (lhs, p_hats) = match last {
        Some((lhs, p)) => (Some(lhs), p),
        None => (None, Vec::new()),
    };
    Ok(AllocationResult {
        user_id: twin.user_id.clone(),
        feasible: false,
        b_star: None,
        lambda_star: None,
        stride: None,
        lhs,
        phi_inv,
        requirement: *req,
        p_hats,
        trail,
    })
}

/// One user's inputs to [`allocate_all`].
#[derive(Debug, Clone)]
pub struct UserDemand {
    pub twin: TwinBundle,
    pub trace: PoseTrace,
    pub render_frames: Vec<usize>,
    pub requirement: QoeRequirement,
}

#[derive(Debug)]
pub struct AllocationSummary {
    /// Sorted by user id.
    pub results: Vec<AllocationResult>,
    /// Users whose allocation raised an error, with the message.
    pub failures: Vec<(String, String)>,
    /// `Σ b*` over feasible users.
    pub total_spectrum: f64,
}

impl AllocationSummary {
    pub fn all_feasible(&self) -> bool {
        self.failures.is_empty() && self.results.iter().all(|r| r.feasible)
    }
}

/// Runs [`qoe_csp`] independently for each user.
pub fn allocate_all(users: &[UserDemand], channel: &ChannelModel, sweep: &SweepParams) -> AllocationSummary {
    let outcomes: Vec<(String, Result<AllocationResult, Error>)> = users
        .par_iter()
        .map(|u| {
            (
                u.twin.user_id.clone(),
                qoe_csp(&u.twin, &u.trace, &u.render_frames, channel, &u.requirement, sweep),
            )
        })
        .collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (user, outcome) in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push((user, e.to_string())),
        }
    }
    results.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    failures.sort();
    let total_spectrum = results.iter().filter_map(|r| r.b_star).sum();
    AllocationSummary {
        results,
        failures,
        total_spectrum,
    }
}
