//! Chart-level differential geometry: points with angular coordinates,
//! scalar fields, 1-forms, metrics, almost complex structures and the
//! contact-form toolkit built on them.

mod chart;
mod contact;
mod forms;
mod wedge;

use thiserror::Error;

pub use chart::{canonical_angle, unwrap_angles, ChartPoint};
pub use contact::{
    compatibility_metric, contact_volume, reeb_rescaled, reeb_solve, rinvariant_extension,
    CompatibilityReport, ContactData, ContactFrame,
};
pub use forms::{
    differential_fd, exterior_derivative_fd, two_form_at, AlmostComplexStructure, ConformalForm,
    ConstantMetric, ConstantStructure, FormFn, MetricField, OneForm, PrequantForm, ScalarField,
    ScalarFn, StandardAlpha, DEFAULT_FD_STEP,
};
pub use wedge::{contact_wedge_volume, two_form_power_volume};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("evaluation outside the field's domain: {0}")]
    EvaluationDomain(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("form is not contact at this point (Reeb residual {residual:e})")]
    NotContact { residual: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}
