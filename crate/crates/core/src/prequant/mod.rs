//! Lifting gradient flows on an exact symplectic manifold `(W, dβ)` to
//! pseudoholomorphic cylinders in the prequantization space `S¹ × W`, with
//! Hofer energy, puncture mass and Cauchy–Riemann residual diagnostics.
//!
//! Chart conventions: points of `S¹ × W` carry the fiber angle first, then
//! the coordinates of `W`. Cylinder domains are `R × R/Z` with coordinates
//! `(s, t)` and the standard structure `j∂_s = ∂_t`.

mod cylinder;
mod energy;
mod mass;
pub mod models;
mod residual;
mod space;

use thiserror::Error;

use crate::diffgeo::GeometryError;
use crate::flow::ode::OdeError;

pub use cylinder::{
    build_cylinder, CylinderMap, CylinderOptions, FiberPerturbation, LiftedCylinder,
};
pub use energy::{
    hofer_energy_formula, hofer_energy_quadrature, EnergyFormula, EnergyQuality, EnergyReport,
    SigmoidFamily,
};
pub use mass::{puncture_mass, MassReport};
pub use residual::{holomorphy_residual, residual_refinement, ResidualGrid, ResidualReport};
pub use space::{
    reeb_period, CompatibleMetric, FiberInvariant, LiftedStructure, PrequantSpace, ReebPeriod,
    SpaceReport,
};

#[derive(Debug, Error)]
pub enum PrequantError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("cylinder integration failed: {source}")]
    Integration {
        source: OdeError,
        partial: Option<Box<LiftedCylinder>>,
    },
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("quadrature did not resolve: {0}")]
    Resolution(String),
    #[error("structure verification failed: {0}")]
    Verification(String),
}
