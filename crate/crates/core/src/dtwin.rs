//! Per-user digital twin: the cloned pose predictor plus a QoE model that
//! maps (upload frequency, predicted pose) to a distribution over
//! discretised VCHR levels `{0, 1/L, ..., 1}`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Scene;
use crate::pipeline::{evaluate_frequency, ActualVisibility};
use crate::prediction::{deployed_training_pairs, fit_clone, ClonedPredictor, PredictorConfig};
use crate::trace::{Pose, PoseTrace};
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Model inputs: upload frequency followed by the six pose components.
pub const INPUT_DIM: usize = 7;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("no training samples")]
    EmptySamples,
    #[error("trace of {len} frames has no render frames after a {window}-frame history window")]
    NoRenderFrames { len: usize, window: usize },
    #[error("invalid QoE model parameters: {0}")]
    Config(String),
    #[error("unsupported twin schema version {0}")]
    Schema(u32),
}

/// Training example for the QoE model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub lambda: f64,
    pub predicted: Pose,
    /// Index of the nearest VCHR level `k / L`.
    pub label: usize,
    /// Unrounded VCHR, kept for reporting.
    pub vchr: f64,
    pub frame: usize,
}

impl TrainingSample {
    pub fn features(&self) -> [f64; INPUT_DIM] {
        features(self.lambda, &self.predicted)
    }
}

fn features(lambda: f64, pose: &Pose) -> [f64; INPUT_DIM] {
    let p = pose.to_array();
    [lambda, p[0], p[1], p[2], p[3], p[4], p[5]]
}

/// Nearest of the `bins + 1` levels `k / bins`.
pub fn vchr_bin(h: f64, bins: usize) -> usize {
    ((h.clamp(0.0, 1.0) * bins as f64).round() as usize).min(bins)
}

/// Runs the render pipeline with the cloned predictor at each frequency and
/// labels every frame whose VCHR is defined.
pub fn generate_training_set(
    trace: &PoseTrace,
    scene: &Scene,
    clone: &ClonedPredictor,
    frequencies: &[f64],
    predictor: &PredictorConfig,
    bins: usize,
) -> Result<Vec<TrainingSample>, Error> {
    let frames = predictor.render_frames(trace.len());
    if frames.is_empty() {
        return Err(TwinError::NoRenderFrames {
            len: trace.len(),
            window: predictor.history_window,
        }
        .into());
    }
    let shared = Arc::new(trace.clone());
    let actual = ActualVisibility::new(trace, scene)?;
    let mut samples = Vec::new();
    for &lambda in frequencies {
        for outcome in evaluate_frequency(&shared, &actual, scene, clone, predictor, lambda, frames.clone())? {
            if let (Some(pose), Some(h)) = (outcome.predicted, outcome.vchr) {
                samples.push(TrainingSample {
                    lambda,
                    predicted: pose,
                    label: vchr_bin(h, bins),
                    vchr: h,
                    frame: outcome.frame,
                });
            }
        }
    }
    Ok(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeHyperParams {
    /// `L`: VCHR is discretised into `L + 1` levels.
    pub bins: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
    pub l2: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for QoeHyperParams {
    fn default() -> Self {
        Self {
            bins: 10,
            hidden: 32,
            learning_rate: 0.5,
            max_epochs: 3000,
            patience: 300,
            l2: 1e-4,
            holdout_fraction: 0.2,
            seed: 7,
        }
    }
}

impl QoeHyperParams {
    pub fn validate(&self) -> Result<(), TwinError> {
        let bad = |m: &str| Err(TwinError::Config(m.to_string()));
        if self.bins == 0 {
            return bad("bins must be >= 1");
        }
        if self.hidden == 0 {
            return bad("hidden width must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout fraction must be in [0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        Ok(())
    }
}

/// Shape of the two-layer network; parameters live in one flat vector laid
/// out as `[w1 (hidden x in), b1 (hidden), w2 (out x hidden), b2 (out)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl Shape {
    pub fn param_count(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.outputs * self.hidden + self.outputs
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.outputs * self.hidden;
        (b1, w2, b2)
    }

    /// Softmax output for one (standardised) input; `hidden` is scratch space.
    fn forward(&self, params: &[f64], x: &[f64], hidden: &mut [f64], probs: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &params[j * self.inputs..(j + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[b1 + j];
            *h = z.tanh();
        }
        for (k, p) in probs.iter_mut().enumerate() {
            let row = &params[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
            *p = row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>() + params[b2 + k];
        }
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            total += *p;
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
    }
}

/// Mean cross-entropy plus `l2/2 * |w|²` over weight matrices (biases are
/// not penalised), on standardised inputs.
pub struct QoeObjective<'a> {
    shape: Shape,
    inputs: &'a [[f64; INPUT_DIM]],
    labels: &'a [usize],
    l2: f64,
}

impl<'a> QoeObjective<'a> {
    pub fn new(shape: Shape, inputs: &'a [[f64; INPUT_DIM]], labels: &'a [usize], l2: f64) -> Self {
        assert_eq!(inputs.len(), labels.len());
        assert_eq!(shape.inputs, INPUT_DIM);
        Self {
            shape,
            inputs,
            labels,
            l2,
        }
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        let (b1, w2, b2) = self.shape.offsets();
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        0.5 * self.l2 * (sq(&params[..b1]) + sq(&params[w2..b2]))
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.shape.hidden];
        let mut probs = vec![0.0; self.shape.outputs];
        let mut total = 0.0;
        for (x, &y) in self.inputs.iter().zip(self.labels) {
            self.shape.forward(params, x, &mut hidden, &mut probs);
            total -= probs[y].max(f64::MIN_POSITIVE).ln();
        }
        total / self.inputs.len() as f64 + self.penalty(params)
    }

    /// Objective value and its gradient by backpropagation.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let s = self.shape;
        let (b1, w2, b2) = s.offsets();
        let n = self.inputs.len() as f64;
        let mut grad = vec![0.0; s.param_count()];
        let mut hidden = vec![0.0; s.hidden];
        let mut probs = vec![0.0; s.outputs];
        let mut dhidden = vec![0.0; s.hidden];
        let mut total = 0.0;
        for (x, &y) in self.inputs.iter().zip(self.labels) {
            s.forward(params, x, &mut hidden, &mut probs);
            total -= probs[y].max(f64::MIN_POSITIVE).ln();
            dhidden.iter_mut().for_each(|d| *d = 0.0);
            for k in 0..s.outputs {
                let dz = (probs[k] - if k == y { 1.0 } else { 0.0 }) / n;
                grad[b2 + k] += dz;
                let row = w2 + k * s.hidden;
                for j in 0..s.hidden {
                    grad[row + j] += dz * hidden[j];
                    dhidden[j] += dz * params[row + j];
                }
            }
            for j in 0..s.hidden {
                let dz = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
                grad[b1 + j] += dz;
                let row = j * s.inputs;
                for (i, v) in x.iter().enumerate() {
                    grad[row + i] += dz * v;
                }
            }
        }
        for i in (0..b1).chain(w2..b2) {
            grad[i] += self.l2 * params[i];
        }
        (total / n + self.penalty(params), grad)
    }
}

/// Loss curves from [`fit_qoe`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_loss: Vec<f64>,
    pub holdout_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// `Ω_u`: softmax classifier over VCHR levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeModel {
    pub user_id: String,
    pub bins: usize,
    pub shape: Shape,
    pub input_mean: [f64; INPUT_DIM],
    pub input_std: [f64; INPUT_DIM],
    pub params: Vec<f64>,
}

impl QoeModel {
    /// Network with Glorot-uniform hidden weights and a zero output layer,
    /// so the initial output is exactly uniform.
    pub fn initial(
        user_id: &str,
        hyper: &QoeHyperParams,
        input_mean: [f64; INPUT_DIM],
        input_std: [f64; INPUT_DIM],
    ) -> Self {
        let shape = Shape {
            inputs: INPUT_DIM,
            hidden: hyper.hidden,
            outputs: hyper.bins + 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let limit = (6.0 / (shape.inputs + shape.hidden) as f64).sqrt();
        let mut params = vec![0.0; shape.param_count()];
        for w in params.iter_mut().take(shape.hidden * shape.inputs) {
            *w = rng.gen_range(-limit..limit);
        }
        Self {
            user_id: user_id.to_string(),
            bins: hyper.bins,
            shape,
            input_mean,
            input_std,
            params,
        }
    }

    pub fn standardise(&self, raw: &[f64; INPUT_DIM]) -> [f64; INPUT_DIM] {
        std::array::from_fn(|i| (raw[i] - self.input_mean[i]) / self.input_std[i])
    }

    /// `P̂(h = k/L | λ, q̂)` for `k = 0..=L`.
    pub fn distribution(&self, lambda: f64, predicted: &Pose) -> Vec<f64> {
        let x = self.standardise(&features(lambda, predicted));
        let mut hidden = vec![0.0; self.shape.hidden];
        let mut probs = vec![0.0; self.shape.outputs];
        self.shape.forward(&self.params, &x, &mut hidden, &mut probs);
        probs
    }

    pub fn level(&self, k: usize) -> f64 {
        k as f64 / self.bins as f64
    }

    /// Probability mass on levels `>= threshold`.
    pub fn hit_probability(&self, lambda: f64, predicted: &Pose, threshold: f64) -> f64 {
        tail_mass(&self.distribution(lambda, predicted), self.bins, threshold)
    }

    pub fn expected_vchr(&self, lambda: f64, predicted: &Pose) -> f64 {
        self.distribution(lambda, predicted)
            .iter()
            .enumerate()
            .map(|(k, p)| self.level(k) * p)
            .sum()
    }

    /// Mean cross-entropy on samples (no regularisation).
    pub fn cross_entropy(&self, samples: &[TrainingSample]) -> f64 {
        let total: f64 = samples
            .iter()
            .map(|s| {
                -self.distribution(s.lambda, &s.predicted)[s.label]
                    .max(f64::MIN_POSITIVE)
                    .ln()
            })
            .sum();
        total / samples.len() as f64
    }

    /// Fraction of samples whose most likely level equals the label.
    pub fn accuracy(&self, samples: &[TrainingSample]) -> f64 {
        let hits = samples
            .iter()
            .filter(|s| {
                let probs = self.distribution(s.lambda, &s.predicted);
                let best = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                best == s.label
            })
            .count();
        hits as f64 / samples.len() as f64
    }
}

/// `Σ_{k/L >= threshold} probs[k]`, exactly 1 when every level qualifies
/// and exactly 0 when none does.
pub fn tail_mass(probs: &[f64], bins: usize, threshold: f64) -> f64 {
    let first = (0..=bins).find(|&k| k as f64 / bins as f64 >= threshold);
    match first {
        None => 0.0,
        Some(0) => 1.0,
        Some(k) => probs[k..].iter().sum::<f64>().clamp(0.0, 1.0),
    }
}

fn mean_std(rows: &[[f64; INPUT_DIM]]) -> ([f64; INPUT_DIM], [f64; INPUT_DIM]) {
    let n = rows.len() as f64;
    let mean: [f64; INPUT_DIM] = std::array::from_fn(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n);
    let std = std::array::from_fn(|i| {
        let var = rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n;
        if var > 1e-18 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, std)
}

/// Seeded shuffle of `0..n` split into `(holdout, train)` index lists.
/// Fewer than five items are all kept for training.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_da7a);
    order.shuffle(&mut rng);
    let n_holdout = if n >= 5 {
        (n as f64 * fraction).round() as usize
    } else {
        0
    };
    let train = order.split_off(n_holdout);
    (order, train)
}

/// Trains `Ω_u` by full-batch gradient descent on the cross-entropy.
///
/// A step that would raise the training loss is retried at half the step
/// size, so the recorded training loss never increases. Parameters with the
/// best holdout loss are returned; training stops after `patience` epochs
/// without holdout improvement.
pub fn fit_qoe(
    user_id: &str,
    samples: &[TrainingSample],
    hyper: &QoeHyperParams,
) -> Result<(QoeModel, TrainingReport), TwinError> {
    hyper.validate()?;
    if samples.is_empty() {
        return Err(TwinError::EmptySamples);
    }
    if let Some(s) = samples.iter().find(|s| s.label > hyper.bins) {
        return Err(TwinError::Config(format!(
            "label {} exceeds {} bins",
            s.label, hyper.bins
        )));
    }

    let (holdout_idx, train_idx) = holdout_split(samples.len(), hyper.holdout_fraction, hyper.seed);
    let (holdout_idx, train_idx) = (&holdout_idx[..], &train_idx[..]);

    let raw: Vec<[f64; INPUT_DIM]> = samples.iter().map(TrainingSample::features).collect();
    let train_raw: Vec<[f64; INPUT_DIM]> = train_idx.iter().map(|&i| raw[i]).collect();
    let (mean, std) = mean_std(&train_raw);
    let mut model = QoeModel::initial(user_id, hyper, mean, std);

    let prepare = |idx: &[usize]| -> (Vec<[f64; INPUT_DIM]>, Vec<usize>) {
        (
            idx.iter().map(|&i| model.standardise(&raw[i])).collect(),
            idx.iter().map(|&i| samples[i].label).collect(),
        )
    };
    let (train_x, train_y) = prepare(train_idx);
    let (hold_x, hold_y) = prepare(holdout_idx);
    let train = QoeObjective::new(model.shape, &train_x, &train_y, hyper.l2);
    let holdout = (!hold_x.is_empty()).then(|| QoeObjective::new(model.shape, &hold_x, &hold_y, 0.0));

    let mut params = model.params.clone();
    let mut best = params.clone();
    let mut report = TrainingReport::default();
    let mut best_holdout = f64::INFINITY;
    let mut step = hyper.learning_rate;
    let (mut loss, mut grad) = train.value_and_gradient(&params);
    report.train_loss.push(loss);
    if let Some(h) = &holdout {
        best_holdout = h.value(&params);
        report.holdout_loss.push(best_holdout);
    }

    let mut candidate = vec![0.0; params.len()];
    for epoch in 1..=hyper.max_epochs {
        let mut accepted = false;
        for _ in 0..40 {
            for ((c, p), g) in candidate.iter_mut().zip(&params).zip(&grad) {
                *c = p - step * g;
            }
            let (new_loss, new_grad) = train.value_and_gradient(&candidate);
            if new_loss <= loss {
                std::mem::swap(&mut params, &mut candidate);
                loss = new_loss;
                grad = new_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        report.train_loss.push(loss);
        match &holdout {
            Some(h) => {
                let hl = h.value(&params);
                report.holdout_loss.push(hl);
                if hl < best_holdout {
                    best_holdout = hl;
                    best.clone_from(&params);
                    report.best_epoch = epoch;
                } else if epoch - report.best_epoch >= hyper.patience {
                    break;
                }
            }
            None => {
                best.clone_from(&params);
                report.best_epoch = epoch;
            }
        }
    }
    model.params = best;
    Ok((model, report))
}

/// Everything fixed when a twin is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub predictor: PredictorConfig,
    pub qoe: QoeHyperParams,
    pub frequencies: Vec<f64>,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorConfig::default(),
            qoe: QoeHyperParams::default(),
            frequencies: vec![1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinMetadata {
    pub frequencies: Vec<f64>,
    pub frames_used: usize,
    pub clone_pairs: usize,
    pub clone_loss: f64,
    pub final_train_loss: f64,
    pub best_epoch: usize,
}

/// A user's digital twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinBundle {
    pub schema_version: u32,
    pub user_id: String,
    pub predictor: PredictorConfig,
    pub clone: ClonedPredictor,
    pub qoe: QoeModel,
    pub metadata: TwinMetadata,
}

impl TwinBundle {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        let bundle: Self = serde_json::from_str(text)?;
        if bundle.schema_version != SCHEMA_VERSION {
            return Err(TwinError::Schema(bundle.schema_version).into());
        }
        Ok(bundle)
    }
}

/// Clones the deployed predictor from its logged outputs, labels the
/// user's frames through the cloned pipeline and fits the QoE model.
pub fn build_twin(trace: &PoseTrace, scene: &Scene, config: &TwinConfig) -> Result<TwinBundle, Error> {
    config.predictor.validate()?;
    let pairs = deployed_training_pairs(trace, &config.frequencies, &config.predictor)?;
    let clone = fit_clone(&pairs, config.predictor.method)?;
    let clone_loss = crate::prediction::clone_loss(&clone, &pairs);
    let samples = generate_training_set(
        trace,
        scene,
        &clone,
        &config.frequencies,
        &config.predictor,
        config.qoe.bins,
    )?;
    let (qoe, report) = fit_qoe(trace.user_id(), &samples, &config.qoe)?;
    Ok(TwinBundle {
        schema_version: SCHEMA_VERSION,
        user_id: trace.user_id().to_string(),
        predictor: config.predictor.clone(),
        clone,
        qoe,
        metadata: TwinMetadata {
            frequencies: config.frequencies.clone(),
            frames_used: samples.len(),
            clone_pairs: pairs.len(),
            clone_loss,
            final_train_loss: report.train_loss.last().copied().unwrap_or(f64::NAN),
            best_epoch: report.best_epoch,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::Method;
    use crate::synthetic;
    use proptest::prelude::*;
    use rand::Rng;

    fn sample(lambda: f64, x: f64, label: usize) -> TrainingSample {
        TrainingSample {
            lambda,
            predicted: Pose::new([x, 1.6, -2.0], [0.0; 3]),
            label,
            vchr: label as f64 / 10.0,
            frame: 0,
        }
    }

    fn quick() -> QoeHyperParams {
        QoeHyperParams {
            max_epochs: 400,
            ..Default::default()
        }
    }

    #[test]
    fn bins_round_to_nearest_level() {
        assert_eq!(vchr_bin(0.0, 10), 0);
        assert_eq!(vchr_bin(0.74, 10), 7);
        assert_eq!(vchr_bin(0.76, 10), 8);
        assert_eq!(vchr_bin(1.0, 10), 10);
    }

    #[test]
    fn tail_mass_examples() {
        let uniform = vec![1.0 / 11.0; 11];
        assert_eq!(tail_mass(&uniform, 10, 0.0), 1.0);
        assert_eq!(tail_mass(&uniform, 10, 1.0 + 1e-12), 0.0);
        // levels 0.8, 0.9, 1.0 qualify
        assert!((tail_mass(&uniform, 10, 0.75) - 3.0 / 11.0).abs() < 1e-15);
        assert!((tail_mass(&uniform, 10, 0.8) - 3.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn untrained_model_is_uniform() {
        let m = QoeModel::initial("u", &QoeHyperParams::default(), [0.0; INPUT_DIM], [1.0; INPUT_DIM]);
        let probs = m.distribution(3.0, &Pose::default());
        let entropy: f64 = -probs.iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((entropy / 11f64.ln() - 1.0).abs() < 0.05);
        assert!((m.hit_probability(3.0, &Pose::default(), 0.75) - 3.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn single_label_gets_most_mass() {
        let samples: Vec<_> = (0..40)
            .map(|i| sample(1.0 + (i % 5) as f64, i as f64 * 0.01, 7))
            .collect();
        let (m, _) = fit_qoe("u", &samples, &quick()).unwrap();
        for s in &samples {
            assert!(m.distribution(s.lambda, &s.predicted)[7] >= 0.9);
        }
    }

    #[test]
    fn separable_clusters_are_learned() {
        let mut samples = Vec::new();
        for i in 0..60 {
            samples.push(sample(1.0 + 0.01 * i as f64, 0.0, 2));
            samples.push(sample(30.0 - 0.01 * i as f64, 0.0, 9));
        }
        let (m, _) = fit_qoe("u", &samples, &quick()).unwrap();
        assert!(m.accuracy(&samples) >= 0.95);
    }

    #[test]
    fn training_loss_never_increases() {
        let samples: Vec<_> = (0..50)
            .map(|i| sample((i % 7) as f64 + 1.0, (i % 3) as f64, i % 4))
            .collect();
        let (_, report) = fit_qoe("u", &samples, &quick()).unwrap();
        assert!(report.train_loss.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.train_loss.last().unwrap() < &report.train_loss[0]);
    }

    #[test]
    fn empty_samples_rejected() {
        assert!(matches!(fit_qoe("u", &[], &quick()), Err(TwinError::EmptySamples)));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let samples: Vec<_> = (0..30)
            .map(|i| sample((i % 5) as f64 + 1.0, i as f64 * 0.1, i % 3))
            .collect();
        let (a, _) = fit_qoe("u", &samples, &quick()).unwrap();
        let (b, _) = fit_qoe("u", &samples, &quick()).unwrap();
        assert_eq!(
            a.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = Shape {
            inputs: INPUT_DIM,
            hidden: 5,
            outputs: 4,
        };
        let xs: Vec<[f64; INPUT_DIM]> = (0..12)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
            .collect();
        let ys: Vec<usize> = (0..12).map(|i| i % 4).collect();
        let obj = QoeObjective::new(shape, &xs, &ys, 1e-2);
        let params: Vec<f64> = (0..shape.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = obj.value_and_gradient(&params);
        for i in 0..params.len() {
            let h = 1e-5;
            let mut p = params.clone();
            p[i] += h;
            let up = obj.value(&p);
            p[i] -= 2.0 * h;
            let down = obj.value(&p);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-6),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn constant_pose_user_is_always_hit() {
        let trace = synthetic::constant("c", 90, synthetic::viewer_pose());
        let config = TwinConfig {
            qoe: quick(),
            frequencies: vec![1.0, 3.0, 30.0],
            ..Default::default()
        };
        let scene = Scene::default();
        let pairs = deployed_training_pairs(&trace, &config.frequencies, &config.predictor).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        let samples =
            generate_training_set(&trace, &scene, &clone, &config.frequencies, &config.predictor, 10).unwrap();
        assert_eq!(samples.len(), 3 * 60);
        assert!(samples.iter().all(|s| s.label == 10));

        let twin = build_twin(&trace, &scene, &config).unwrap();
        for lambda in [1.0, 3.0, 30.0] {
            assert!(twin.qoe.hit_probability(lambda, &synthetic::viewer_pose(), 1.0) > 0.95);
        }
    }

    #[test]
    fn looking_away_gives_no_samples() {
        let away = Pose::new([0.0, 1.6, -2.0], [180.0, 0.0, 0.0]);
        let trace = synthetic::constant("away", 60, away);
        let config = PredictorConfig::default();
        let pairs = deployed_training_pairs(&trace, &[3.0], &config).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        let samples = generate_training_set(&trace, &Scene::default(), &clone, &[3.0, 30.0], &config, 10).unwrap();
        assert!(samples.is_empty());
    }

    #[test]
    fn too_short_trace_is_rejected() {
        let trace = synthetic::constant("short", 10, synthetic::viewer_pose());
        let err = generate_training_set(
            &trace,
            &Scene::default(),
            &ClonedPredictor::persistence(),
            &[30.0],
            &PredictorConfig::default(),
            10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Twin(TwinError::NoRenderFrames { .. })));
    }

    #[test]
    fn denser_uploads_dominate_labels() {
        let trace = synthetic::linear_sweep("lin", 300);
        let config = PredictorConfig::default();
        let pairs = deployed_training_pairs(&trace, &[3.0, 30.0], &config).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        let samples = generate_training_set(&trace, &Scene::default(), &clone, &[3.0, 30.0], &config, 10).unwrap();
        // empirical CDFs: the 30 Hz labels lie below the 3 Hz labels' CDF everywhere
        let cdf = |lambda: f64, k: usize| {
            let xs: Vec<_> = samples.iter().filter(|s| s.lambda == lambda).collect();
            xs.iter().filter(|s| s.label <= k).count() as f64 / xs.len() as f64
        };
        for k in 0..=10 {
            assert!(cdf(30.0, k) <= cdf(3.0, k) + 1e-12, "level {k}");
        }
    }

    #[test]
    fn bundle_json_round_trip_and_version_check() {
        let trace = synthetic::constant("c", 60, synthetic::viewer_pose());
        let config = TwinConfig {
            qoe: QoeHyperParams {
                max_epochs: 20,
                ..Default::default()
            },
            frequencies: vec![3.0],
            ..Default::default()
        };
        let twin = build_twin(&trace, &Scene::default(), &config).unwrap();
        let json = twin.to_json().unwrap();
        assert!(json.contains("\"schema_version\": 1"));
        assert_eq!(TwinBundle::from_json(&json).unwrap(), twin);
        let bumped = json.replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(TwinBundle::from_json(&bumped).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn outputs_are_distributions_and_tails_monotone(
            seed in 0u64..1000,
            lambda in 0.5f64..30.0,
            pose in prop::array::uniform6(-3.0f64..3.0),
            v1 in 0.0f64..1.0,
            v2 in 0.0f64..1.0,
        ) {
            let hyper = QoeHyperParams { seed, ..Default::default() };
            let mut m = QoeModel::initial("u", &hyper, [0.0; INPUT_DIM], [1.0; INPUT_DIM]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in m.params.iter_mut() {
                *p = rng.gen_range(-3.0..3.0);
            }
            let q = Pose::from_array(pose);
            let probs = m.distribution(lambda, &q);
            prop_assert!(probs.iter().all(|p| *p >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            prop_assert!(m.hit_probability(lambda, &q, hi) <= m.hit_probability(lambda, &q, lo) + 1e-15);
        }
    }
}
