//! Digital-twin driven spectrum allocation for volumetric video streaming.
//!
//! Pose traces are uploaded over a queued wireless link, the server
//! predicts each render pose from the uploads it has, and a per-user twin
//! estimates how likely each frame is to reach a target visible-cell hit
//! ratio. The allocator picks the least spectrum at which that likelihood
//! satisfies a chance constraint.

pub mod allocator;
pub mod channel;
pub mod dtwin;
pub mod geometry;
pub mod pipeline;
pub mod prediction;
pub mod synthetic;
pub mod trace;

pub use allocator::{AllocError, AllocationResult, QoeRequirement, SweepParams};
pub use channel::{ChannelError, ChannelModel, SnrDistribution};
pub use dtwin::{TwinBundle, TwinConfig, TwinError};
pub use geometry::{GeometryError, Scene, VisibleSet};
pub use prediction::{PredictionError, PredictorConfig};
pub use trace::{Pose, PoseTrace, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Allocation(#[from] AllocError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
