//! Cylinders and planes near a transverse knot `S¹ × {0} ⊂ S¹ × R^{2n}`
//! whose limit sets are tori.
//!
//! Chart conventions: `S¹ × R^{2n}` has coordinates
//! `(θ, x_1, y_1, …, x_n, y_n)`; `W = S¹ × R^{2(n−1)} × R` has
//! `(θ, x_1, y_1, …, x_{n−1}, y_{n−1}, ρ)`; the prequantization space over `W`
//! puts its fiber angle φ in front.

mod annulus;
mod phi;
mod plane;
mod wspace;

use thiserror::Error;

use crate::diffgeo::GeometryError;
use crate::flow::FlowError;
use crate::prequant::PrequantError;

pub use annulus::{
    annulus_space, build_annulus_cylinder, AnnulusChartField, AnnulusChartMetric, AnnulusCylinder,
    AnnulusOptions,
};
pub use phi::{
    check_extended_j, lifted_j1, phi_pullback_check, xi0_frame, ExtendedJ, ExtendedJReport,
    KnotModel, PhiMap, PullbackResidual,
};
pub use plane::{
    build_plane, holomorphy_residual_plane, offaxis_norm_drift, plane_contact, plane_residual_grid,
    removable_singularity_check, FTildeField, LiftedPlane, NormDriftReport, PlaneChartMetric,
    PlaneOptions, PushedPlane, RemovabilityReport, TailFit,
};
pub use wspace::{
    build_w_structures, grad_plane_profile, p_norm, GJ1Metric, J1Structure, PlaneProfileField,
    WBeta, WReport, WSpace,
};

/// Coverage of a limit torus `S¹ × (circle)` by a lifted cylinder. The
/// fiber angle is swept completely by every loop `t ↦ ũ(s, t)`, so joint
/// coverage reduces to the base-angle coverage of the flow.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TorusCoverage {
    pub bins: usize,
    pub band: f64,
    pub fiber_coverage: f64,
    pub base_coverage: f64,
    pub joint_coverage: f64,
    pub windings: f64,
    pub in_band_states: usize,
}

impl TorusCoverage {
    pub(crate) fn from_limit(rep: &crate::flow::LimitSetReport) -> Self {
        let bins = rep.angular_bins;
        let base_hit = (rep.coverage * bins as f64).round() as usize;
        // every in-band sample carries the whole fiber circle
        let fiber_coverage = if rep.in_band_states > 0 { 1.0 } else { 0.0 };
        let joint = if rep.in_band_states > 0 {
            base_hit * bins
        } else {
            0
        };
        Self {
            bins,
            band: rep.band_epsilon,
            fiber_coverage,
            base_coverage: rep.coverage,
            joint_coverage: joint as f64 / (bins * bins) as f64,
            windings: rep.windings,
            in_band_states: rep.in_band_states,
        }
    }
}

#[derive(Debug, Error)]
pub enum KnotError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Prequant(#[from] PrequantError),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("construction verification failed: {0}")]
    Verification(String),
    #[error("tail fit failed: {0}")]
    TailFit(String),
    #[error("removability check failed: {0}")]
    Removability(String),
}
