//! Gradient-flow integration with angular-lift bookkeeping, the z
//! diagnostic, omega-limit detection and seeded random metrics.

pub mod dense;
pub mod gradient;
pub mod limit;
pub mod metric;
pub mod ode;
pub mod trajectory;

use thiserror::Error;

pub use dense::HermiteCurve;
pub use gradient::{dual_metric_entries, riemannian_gradient};
pub use limit::{
    detect_omega_limit, track_z, verify_z_barrier, BarrierReport, BarrierViolation, LimitSetReport,
};
pub use metric::{random_metric, RandomMetric, RandomMetricSpec};
pub use ode::Method;
pub use trajectory::{
    integrate_flow, FlowMode, FlowOptions, FlowTermination, FlowTrajectory, StopCriteria,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("random metric rejected: {0}")]
    SpecRejected(String),
    #[error("integration failed after {} accepted nodes: {source}", partial.len())]
    Integration {
        source: ode::OdeError,
        partial: Box<FlowTrajectory>,
    },
    #[error("trajectory never entered the band |s| < {band}")]
    InsufficientIntegration { band: f64 },
    #[error("invalid flow input: {0}")]
    InvalidInput(String),
}
