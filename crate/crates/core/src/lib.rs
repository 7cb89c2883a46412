//! Numerical laboratory for gradient flows whose omega limit sets are
//! circles, and for their lifts to finite-energy pseudoholomorphic cylinders
//! and planes in prequantization spaces.
//!
//! * [`diffgeo`]: chart-level forms, metrics, Reeb fields.
//! * [`spiral`]: the spiralling potentials and their profiles.
//! * [`flow`]: adaptive gradient-flow integration and limit-set diagnostics.
//! * [`prequant`]: lifting flows to pseudoholomorphic cylinders, energy, mass
//!   and Cauchy–Riemann residuals.
//! * [`knot`]: annulus cylinders and planes near a transverse knot.

pub mod diffgeo;
pub mod flow;
pub mod knot;
pub mod linalg;
pub mod prequant;
pub mod quadrature;
pub mod spiral;
