//! Pose prediction over a window of uploaded poses, and the cloned
//! predictor a digital twin fits to the deployed predictor's outputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{normalize_degrees, Pose, PoseTrace, SampledTrace};

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("frame {frame} outside trace of {len} frames")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error("invalid predictor config: {0}")]
    Config(String),
    #[error("no usable training pairs")]
    EmptyTrainingSet,
    #[error("least-squares fit failed: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LinearRegression,
    Persistence,
}

/// How far ahead of the newest query frame a prediction targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lookahead {
    /// One upload stride, i.e. the next uploaded frame.
    Stride,
    Frames(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// History window `H` in frames.
    pub history_window: usize,
    pub lookahead: Lookahead,
    pub method: Method,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            history_window: 30,
            lookahead: Lookahead::Stride,
            method: Method::LinearRegression,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictionError> {
        if self.history_window < 2 {
            return Err(PredictionError::Config(format!(
                "history window must be >= 2 frames, got {}",
                self.history_window
            )));
        }
        if self.lookahead == Lookahead::Frames(0) {
            return Err(PredictionError::Config("lookahead must be >= 1 frame".into()));
        }
        Ok(())
    }

    pub fn lookahead_frames(&self, stride: usize) -> usize {
        match self.lookahead {
            Lookahead::Stride => stride,
            Lookahead::Frames(w) => w,
        }
    }

    /// Frames that require rendering: everything from the end of the first
    /// full history window onward.
    pub fn render_frames(&self, trace_len: usize) -> std::ops::Range<usize> {
        self.history_window.min(trace_len)..trace_len
    }
}

/// Uploaded poses available when predicting from frame `query_frame`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseHistory {
    pub query_frame: usize,
    pub stride: usize,
    pub entries: Vec<(usize, Pose)>,
}

impl PoseHistory {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn newest(&self) -> Option<&Pose> {
        self.entries.last().map(|(_, p)| p)
    }

    /// Component `c` of every entry, with angles unwrapped along the history.
    fn series(&self, c: usize) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.entries.len());
        for (_, pose) in &self.entries {
            let v = pose.to_array()[c];
            let next = match out.last() {
                Some(&prev) if Pose::is_angle_component(c) => prev + normalize_degrees(v - prev),
                _ => v,
            };
            out.push(next);
        }
        out
    }
}

/// Uploaded poses with source index in `(f - H, f]`.
pub fn build_history(sampled: &SampledTrace, f: usize, history_window: usize) -> Result<PoseHistory, PredictionError> {
    let trace = sampled.source();
    if f >= trace.len() {
        return Err(PredictionError::FrameOutOfRange {
            frame: f,
            len: trace.len(),
        });
    }
    let stride = sampled.stride();
    let lo = (f + 1).saturating_sub(history_window);
    let first = lo.div_ceil(stride) * stride;
    let entries = (first..=f).step_by(stride).map(|k| (k, trace.poses()[k])).collect();
    Ok(PoseHistory {
        query_frame: f,
        stride,
        entries,
    })
}

/// Per-component summary of a history: newest value, least-squares level
/// at the query frame, and least-squares slope per frame.
#[derive(Debug, Clone, Copy)]
struct ComponentFit {
    last: f64,
    level: f64,
    slope: f64,
}

fn fit_component(history: &PoseHistory, c: usize) -> ComponentFit {
    let ys = history.series(c);
    let last = *ys.last().expect("non-empty history");
    if ys.len() < 2 {
        return ComponentFit {
            last,
            level: last,
            slope: 0.0,
        };
    }
    let n = ys.len() as f64;
    let k_mean = history.entries.iter().map(|(k, _)| *k as f64).sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for ((k, _), y) in history.entries.iter().zip(&ys) {
        let dk = *k as f64 - k_mean;
        sxy += dk * (y - y_mean);
        sxx += dk * dk;
    }
    let slope = sxy / sxx;
    ComponentFit {
        last,
        level: y_mean + slope * (history.query_frame as f64 - k_mean),
        slope,
    }
}

fn finish(values: [f64; 6]) -> Pose {
    Pose::from_array(values)
}

/// Predicts the pose at `query_frame + lookahead`. Linear regression falls
/// back to persistence with fewer than two entries; an empty history gives
/// `None`.
pub fn predict_pose(history: &PoseHistory, lookahead: usize, method: Method) -> Option<Pose> {
    if history.is_empty() {
        return None;
    }
    if method == Method::Persistence || history.len() < 2 {
        return history.newest().copied();
    }
    Some(finish(std::array::from_fn(|c| {
        let fit = fit_component(history, c);
        fit.level + fit.slope * lookahead as f64
    })))
}

/// Anything that maps a history to a predicted pose.
pub trait PosePredictor {
    fn predict(&self, history: &PoseHistory, lookahead: usize) -> Option<Pose>;
}

/// The predictor running in the application.
#[derive(Debug, Clone, Copy)]
pub struct DeployedPredictor(pub Method);

impl PosePredictor for DeployedPredictor {
    fn predict(&self, history: &PoseHistory, lookahead: usize) -> Option<Pose> {
        predict_pose(history, lookahead, self.0)
    }
}

/// Prediction used to render frame `g`: made from the history at
/// `g - W` and looking `W` frames ahead.
pub fn predict_render_frame<P: PosePredictor + ?Sized>(
    predictor: &P,
    sampled: &SampledTrace,
    g: usize,
    config: &PredictorConfig,
) -> Result<Option<Pose>, PredictionError> {
    let w = config.lookahead_frames(sampled.stride());
    if g < w {
        return Ok(None);
    }
    let history = build_history(sampled, g - w, config.history_window)?;
    Ok(predictor.predict(&history, w))
}

/// One element of the clone's training set: a history and the deployed
/// predictor's output for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub history: PoseHistory,
    pub lookahead: usize,
    pub target: Pose,
}

/// Runs the deployed predictor over every render frame of `trace` at each
/// upload frequency and records its inputs and outputs.
pub fn deployed_training_pairs(
    trace: &PoseTrace,
    frequencies: &[f64],
    config: &PredictorConfig,
) -> Result<Vec<TrainingPair>, crate::Error> {
    let deployed = DeployedPredictor(config.method);
    let shared = std::sync::Arc::new(trace.clone());
    let mut pairs = Vec::new();
    for &lambda in frequencies {
        let sampled = crate::trace::downsample(shared.clone(), lambda)?;
        let w = config.lookahead_frames(sampled.stride());
        for g in config.render_frames(trace.len()) {
            if g < w {
                continue;
            }
            let history = build_history(&sampled, g - w, config.history_window)?;
            if let Some(target) = deployed.predict(&history, w) {
                pairs.push(TrainingPair {
                    history,
                    lookahead: w,
                    target,
                });
            }
        }
    }
    Ok(pairs)
}

/// Number of regression features per pose component:
/// `[1, newest, level, slope, slope * stride]`.
pub const CLONE_FEATURES: usize = 5;

/// Cloned pose predictor `Ĝ(·; ϑ)`.
///
/// For linear regression, each component is an affine map of the history's
/// newest value, its least-squares level at the query frame, and its
/// least-squares slope scaled by one frame and by one upload stride. The
/// deployed least-squares extrapolator with a fixed or stride-sized
/// lookahead lies inside this class, so a well-posed fit recovers it
/// exactly. Persistence has no parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClonedPredictor {
    pub method: Method,
    pub coefficients: Vec<[f64; CLONE_FEATURES]>,
}

impl ClonedPredictor {
    pub fn persistence() -> Self {
        Self {
            method: Method::Persistence,
            coefficients: Vec::new(),
        }
    }

    fn features(fit: &ComponentFit, stride: usize) -> [f64; CLONE_FEATURES] {
        [1.0, fit.last, fit.level, fit.slope, fit.slope * stride as f64]
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

impl PosePredictor for ClonedPredictor {
    fn predict(&self, history: &PoseHistory, _lookahead: usize) -> Option<Pose> {
        if history.is_empty() {
            return None;
        }
        match self.method {
            Method::Persistence => history.newest().copied(),
            Method::LinearRegression => Some(finish(std::array::from_fn(|c| {
                let x = Self::features(&fit_component(history, c), history.stride);
                x.iter().zip(&self.coefficients[c]).map(|(a, b)| a * b).sum()
            }))),
        }
    }
}

/// Squared distance between two poses, angle differences wrapped.
pub fn pose_sq_error(a: &Pose, b: &Pose) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    (0..6)
        .map(|c| {
            let d = if Pose::is_angle_component(c) {
                normalize_degrees(a[c] - b[c])
            } else {
                a[c] - b[c]
            };
            d * d
        })
        .sum()
}

/// Mean squared error of a clone over training pairs (the cloning loss).
pub fn clone_loss<P: PosePredictor + ?Sized>(clone: &P, pairs: &[TrainingPair]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for pair in pairs {
        if let Some(p) = clone.predict(&pair.history, pair.lookahead) {
            total += pose_sq_error(&p, &pair.target);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Fits `ϑ` by minimising the mean squared cloning loss; closed-form least
/// squares (minimum-norm when the features are collinear).
pub fn fit_clone(pairs: &[TrainingPair], method: Method) -> Result<ClonedPredictor, PredictionError> {
    let usable: Vec<&TrainingPair> = pairs.iter().filter(|p| !p.history.is_empty()).collect();
    if usable.is_empty() {
        return Err(PredictionError::EmptyTrainingSet);
    }
    if method == Method::Persistence {
        return Ok(ClonedPredictor::persistence());
    }

    let n = usable.len();
    let mut coefficients = Vec::with_capacity(Pose::DIM);
    for c in 0..Pose::DIM {
        let mut x = DMatrix::<f64>::zeros(n, CLONE_FEATURES);
        let mut y = DVector::<f64>::zeros(n);
        for (row, pair) in usable.iter().enumerate() {
            let fit = fit_component(&pair.history, c);
            for (j, v) in ClonedPredictor::features(&fit, pair.history.stride).iter().enumerate() {
                x[(row, j)] = *v;
            }
            let target = pair.target.to_array()[c];
            y[row] = if Pose::is_angle_component(c) {
                fit.last + normalize_degrees(target - fit.last)
            } else {
                target
            };
        }
        let svd = x.svd(true, true);
        let max_sv = svd.singular_values.max();
        let theta = svd
            .solve(&y, max_sv * 1e-12)
            .map_err(|e| PredictionError::Fit(e.to_string()))?;
        let row: [f64; CLONE_FEATURES] = std::array::from_fn(|j| theta[j]);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(PredictionError::Fit(format!(
                "non-finite coefficients for component {c}"
            )));
        }
        coefficients.push(row);
    }
    Ok(ClonedPredictor {
        method: Method::LinearRegression,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::downsample;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn x_history(query: usize, points: &[(usize, f64)]) -> PoseHistory {
        PoseHistory {
            query_frame: query,
            stride: 10,
            entries: points
                .iter()
                .map(|&(k, x)| (k, Pose::new([x, 0.0, 0.0], [0.0; 3])))
                .collect(),
        }
    }

    fn linear_trace(n: usize) -> PoseTrace {
        let poses = (0..n)
            .map(|i| {
                let t = i as f64;
                Pose::new(
                    [0.01 * t, 1.6 + 0.002 * t, -2.0 - 0.005 * t],
                    [0.5 * t, -0.1 * t, 0.05 * t],
                )
            })
            .collect();
        PoseTrace::new("lin", 30.0, poses).unwrap()
    }

    fn wavy_trace(n: usize) -> PoseTrace {
        let poses = (0..n)
            .map(|i| {
                let t = i as f64 / 30.0;
                Pose::new(
                    [0.3 * (0.7 * t).sin(), 1.6, -2.0 + 0.2 * (0.5 * t).cos()],
                    [25.0 * (0.9 * t).sin(), 8.0 * (0.6 * t).cos(), 0.0],
                )
            })
            .collect();
        PoseTrace::new("wavy", 30.0, poses).unwrap()
    }

    #[test]
    fn history_stride_ten() {
        let s = downsample(linear_trace(300), 3.0).unwrap();
        let h = build_history(&s, 30, 30).unwrap();
        assert_eq!(h.entries.iter().map(|e| e.0).collect::<Vec<_>>(), vec![10, 20, 30]);
    }

    #[test]
    fn history_shorter_than_stride_is_empty() {
        let s = downsample(linear_trace(300), 3.0).unwrap();
        let h = build_history(&s, 25, 4).unwrap();
        assert!(h.is_empty());
        assert_eq!(predict_pose(&h, 1, Method::LinearRegression), None);
    }

    #[test]
    fn history_stride_one() {
        let s = downsample(linear_trace(300), 30.0).unwrap();
        let h = build_history(&s, 5, 3).unwrap();
        assert_eq!(h.entries.iter().map(|e| e.0).collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn history_rejects_out_of_range_frame() {
        let s = downsample(linear_trace(10), 30.0).unwrap();
        assert!(build_history(&s, 10, 3).is_err());
    }

    #[test]
    fn exact_on_collinear_points() {
        let h = x_history(20, &[(0, 0.0), (10, 1.0), (20, 2.0)]);
        let p = predict_pose(&h, 10, Method::LinearRegression).unwrap();
        assert_abs_diff_eq!(p.tx, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn two_point_line() {
        let h = x_history(10, &[(0, 0.0), (10, 2.0)]);
        let p = predict_pose(&h, 5, Method::LinearRegression).unwrap();
        assert_abs_diff_eq!(p.tx, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_history_predicts_constant() {
        let pose = Pose::new([1.0, 2.0, 3.0], [170.0, -20.0, 5.0]);
        let h = PoseHistory {
            query_frame: 40,
            stride: 10,
            entries: vec![(20, pose), (30, pose), (40, pose)],
        };
        for method in [Method::LinearRegression, Method::Persistence] {
            let p = predict_pose(&h, 17, method).unwrap();
            assert!(pose_sq_error(&p, &pose) < 1e-20);
        }
    }

    #[test]
    fn single_entry_falls_back_to_persistence() {
        let h = x_history(10, &[(10, 4.0)]);
        assert_eq!(predict_pose(&h, 5, Method::LinearRegression).unwrap().tx, 4.0);
    }

    #[test]
    fn angles_unwrap_across_the_seam() {
        let pose = |yaw: f64| Pose::new([0.0; 3], [yaw, 0.0, 0.0]);
        let h = PoseHistory {
            query_frame: 2,
            stride: 1,
            entries: vec![(0, pose(170.0)), (1, pose(175.0)), (2, pose(-180.0))],
        };
        let p = predict_pose(&h, 2, Method::LinearRegression).unwrap();
        assert_abs_diff_eq!(p.theta_x, -170.0, epsilon = 1e-9);
    }

    #[test]
    fn clone_of_linear_regression_is_exact() {
        let config = PredictorConfig::default();
        let pairs = deployed_training_pairs(&wavy_trace(300), &[1.0, 2.0, 3.0, 5.0, 10.0, 30.0], &config).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        assert!(clone_loss(&clone, &pairs) < 1e-9);
        let fixed = PredictorConfig {
            lookahead: Lookahead::Frames(4),
            ..config
        };
        let pairs = deployed_training_pairs(&wavy_trace(300), &[2.0, 6.0, 15.0], &fixed).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        assert!(clone_loss(&clone, &pairs) < 1e-9);
    }

    #[test]
    fn persistence_clone_single_pair() {
        let pose = Pose::new([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]);
        let pair = TrainingPair {
            history: PoseHistory {
                query_frame: 0,
                stride: 1,
                entries: vec![(0, pose)],
            },
            lookahead: 1,
            target: pose,
        };
        let clone = fit_clone(&[pair.clone(), pair.clone()], Method::Persistence).unwrap();
        assert_eq!(clone.predict(&pair.history, 1), Some(pose));
    }

    #[test]
    fn persistence_clone_loss_matches_enumeration() {
        // 10-frame trace, every frame uploaded, H = 3, W = 2
        let trace = wavy_trace(10);
        let config = PredictorConfig {
            history_window: 3,
            lookahead: Lookahead::Frames(2),
            method: Method::LinearRegression,
        };
        let pairs = deployed_training_pairs(&trace, &[30.0], &config).unwrap();
        let clone = fit_clone(&pairs, Method::Persistence).unwrap();

        // brute force: for each render frame g in 3..10, OLS on frames
        // g-4..=g-2 extrapolated to g versus the pose at g-2
        let mut total = 0.0;
        let mut count = 0;
        for g in 3..10usize {
            let f = g - 2;
            let ks: Vec<usize> = (f.saturating_sub(2)..=f).collect();
            let mut predicted = [0.0; 6];
            for (c, slot) in predicted.iter_mut().enumerate() {
                let ys: Vec<f64> = ks.iter().map(|&k| trace.poses()[k].to_array()[c]).collect();
                let n = ks.len() as f64;
                let km = ks.iter().sum::<usize>() as f64 / n;
                let ym = ys.iter().sum::<f64>() / n;
                let b = ks
                    .iter()
                    .zip(&ys)
                    .map(|(&k, y)| (k as f64 - km) * (y - ym))
                    .sum::<f64>()
                    / ks.iter().map(|&k| (k as f64 - km).powi(2)).sum::<f64>();
                *slot = ym + b * (g as f64 - km);
            }
            let last = trace.poses()[f].to_array();
            total += (0..6).map(|c| (predicted[c] - last[c]).powi(2)).sum::<f64>();
            count += 1;
        }
        assert_eq!(pairs.len(), count);
        assert_abs_diff_eq!(clone_loss(&clone, &pairs), total / count as f64, epsilon = 1e-9);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(matches!(
            fit_clone(&[], Method::LinearRegression),
            Err(PredictionError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn clone_loss_gradient_vanishes_at_optimum() {
        let config = PredictorConfig::default();
        let pairs = deployed_training_pairs(&wavy_trace(120), &[3.0, 10.0], &config).unwrap();
        // perturb the targets so the optimum has non-zero loss
        let noisy: Vec<TrainingPair> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut t = p.target.to_array();
                t[0] += 0.01 * ((i * 7919) % 13) as f64 / 13.0;
                TrainingPair {
                    target: Pose::from_array(t),
                    ..p.clone()
                }
            })
            .collect();
        let clone = fit_clone(&noisy, Method::LinearRegression).unwrap();
        let base = clone_loss(&clone, &noisy);
        let h = 1e-6;
        for j in 0..CLONE_FEATURES {
            let mut plus = clone.clone();
            let mut minus = clone.clone();
            plus.coefficients[0][j] += h;
            minus.coefficients[0][j] -= h;
            let grad = (clone_loss(&plus, &noisy) - clone_loss(&minus, &noisy)) / (2.0 * h);
            // a unit move in ϑ changes the loss by O(1) elsewhere; at the optimum it is flat
            let mut away = clone.clone();
            away.coefficients[0][j] += 1e-3;
            let grad_away = (clone_loss(&away, &noisy) - base) / 1e-3;
            assert!(
                grad.abs() <= 1e-6 * grad_away.abs().max(base),
                "feature {j}: {grad} vs {grad_away}"
            );
        }
    }

    #[test]
    fn denser_uploads_do_not_hurt_smooth_prediction() {
        let trace = std::sync::Arc::new(wavy_trace(300));
        let config = PredictorConfig {
            lookahead: Lookahead::Frames(3),
            ..Default::default()
        };
        let mut errors = Vec::new();
        for lambda in [1.0, 2.0, 3.0, 5.0, 6.0, 10.0, 15.0, 30.0] {
            let s = downsample(trace.clone(), lambda).unwrap();
            let mut total = 0.0;
            let mut n = 0;
            for g in config.render_frames(trace.len()) {
                if let Some(p) = predict_render_frame(&DeployedPredictor(config.method), &s, g, &config).unwrap() {
                    total += pose_sq_error(&p, &trace.poses()[g]);
                    n += 1;
                }
            }
            errors.push(total / n as f64);
        }
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{errors:?}");
        }
    }

    #[test]
    fn clone_json_round_trip() {
        let pairs = deployed_training_pairs(&wavy_trace(60), &[10.0], &PredictorConfig::default()).unwrap();
        let clone = fit_clone(&pairs, Method::LinearRegression).unwrap();
        let back = ClonedPredictor::from_json(&clone.to_json().unwrap()).unwrap();
        assert_eq!(back, clone);
    }

    fn arb_history() -> impl Strategy<Value = PoseHistory> {
        (
            2usize..6,
            1usize..5,
            prop::collection::vec(prop::array::uniform6(-50.0f64..50.0), 6),
        )
            .prop_map(|(m, stride, vals)| PoseHistory {
                query_frame: 100,
                stride,
                entries: (0..m)
                    .map(|j| (100 - (m - 1 - j) * stride, Pose::from_array(vals[j])))
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn translation_equivariant(h in arb_history(), shift in prop::array::uniform3(-10.0f64..10.0), w in 1usize..20) {
            let mut shifted = h.clone();
            for (_, p) in shifted.entries.iter_mut() {
                p.tx += shift[0];
                p.ty += shift[1];
                p.tz += shift[2];
            }
            let a = predict_pose(&h, w, Method::LinearRegression).unwrap();
            let b = predict_pose(&shifted, w, Method::LinearRegression).unwrap();
            prop_assert!((b.tx - a.tx - shift[0]).abs() < 1e-8);
            prop_assert!((b.ty - a.ty - shift[1]).abs() < 1e-8);
            prop_assert!((b.tz - a.tz - shift[2]).abs() < 1e-8);
        }

        #[test]
        fn time_shift_invariant(h in arb_history(), dt in 0usize..500, w in 1usize..20) {
            let mut later = h.clone();
            later.query_frame += dt;
            for (k, _) in later.entries.iter_mut() {
                *k += dt;
            }
            let a = predict_pose(&h, w, Method::LinearRegression).unwrap();
            let b = predict_pose(&later, w, Method::LinearRegression).unwrap();
            prop_assert!(pose_sq_error(&a, &b) < 1e-12);
        }
    }
}
