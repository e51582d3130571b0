//! Per-frame rendering outcome: predict the render pose from the uploaded
//! history, then score it against the actual pose's visible cells.

use std::sync::Arc;

use crate::geometry::{vchr, GeometryError, Scene, VisibleSet};
use crate::prediction::{predict_render_frame, PosePredictor, PredictorConfig};
use crate::trace::{downsample, Pose, PoseTrace};
use crate::Error;

/// Visible sets for every frame of a trace, computed once.
#[derive(Debug, Clone)]
pub struct ActualVisibility {
    sets: Vec<VisibleSet>,
}

impl ActualVisibility {
    pub fn new(trace: &PoseTrace, scene: &Scene) -> Result<Self, GeometryError> {
        let sets = trace
            .poses()
            .iter()
            .map(|p| scene.visible(p))
            .collect::<Result<_, _>>()?;
        Ok(Self { sets })
    }

    pub fn get(&self, frame: usize) -> &VisibleSet {
        &self.sets[frame]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame: usize,
    /// `None` when no uploaded pose was available to predict from.
    pub predicted: Option<Pose>,
    /// `None` when neither pose sees any cell.
    pub vchr: Option<f64>,
}

/// VCHR of one frame; a missing prediction renders nothing.
pub fn score_frame(scene: &Scene, actual: &VisibleSet, predicted: Option<&Pose>) -> Result<Option<f64>, GeometryError> {
    let predicted_set = match predicted {
        Some(p) => scene.visible(p)?,
        None => VisibleSet::new(),
    };
    Ok(vchr(actual, &predicted_set))
}

/// Renders every frame in `frames` at upload frequency `lambda`.
pub fn evaluate_frequency<P: PosePredictor + ?Sized>(
    trace: &Arc<PoseTrace>,
    actual: &ActualVisibility,
    scene: &Scene,
    predictor: &P,
    config: &PredictorConfig,
    lambda: f64,
    frames: impl IntoIterator<Item = usize>,
) -> Result<Vec<FrameOutcome>, Error> {
    let sampled = downsample(trace.clone(), lambda)?;
    frames
        .into_iter()
        .map(|g| {
            let predicted = predict_render_frame(predictor, &sampled, g, config)?;
            let vchr = score_frame(scene, actual.get(g), predicted.as_ref())?;
            Ok(FrameOutcome {
                frame: g,
                predicted,
                vchr,
            })
        })
        .collect()
}

/// Mean VCHR over frames where it is defined.
pub fn mean_vchr(outcomes: &[FrameOutcome]) -> Option<f64> {
    let values: Vec<f64> = outcomes.iter().filter_map(|o| o.vchr).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
