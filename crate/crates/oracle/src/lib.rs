//! Reference computations used to check `marqoe-core`.
//!
//! Nothing here calls the numerical routines it checks: the normal CDF
//! comes from `statrs`, service moments use composite Simpson rather than
//! double-exponential quadrature, the queue is simulated event by event and
//! set overlap is computed on ordinary ordered sets.

pub mod jaccard;
pub mod queue;
pub mod replay;
pub mod report;
pub mod service;
pub mod tail;

pub use report::OracleReport;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("queue unstable: utilisation {0} >= 1")]
    Unstable(f64),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] marqoe_core::Error),
}

impl From<marqoe_core::TraceError> for OracleError {
    fn from(e: marqoe_core::TraceError) -> Self {
        Self::Core(e.into())
    }
}

impl From<marqoe_core::GeometryError> for OracleError {
    fn from(e: marqoe_core::GeometryError) -> Self {
        Self::Core(e.into())
    }
}
