//! Small reference spaces used by the test suites and the CLI.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::PrequantSpace;
use crate::diffgeo::{ConstantStructure, FormFn, OneForm, ScalarFn, StandardAlpha};

/// `W = R²`, `β = x dy`, `f = arctan x`, standard `j`.
pub fn arctan_space() -> PrequantSpace {
    let beta: Arc<dyn OneForm> = Arc::new(
        FormFn::new(2, |x| DVector::from_vec(vec![0.0, x[0]]))
            .with_derivative(|_| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
    );
    let f = ScalarFn::new(
        2,
        |x| x[0].atan(),
        |x| DVector::from_vec(vec![1.0 / (1.0 + x[0] * x[0]), 0.0]),
    );
    PrequantSpace::new(beta, Arc::new(ConstantStructure::standard(2)), Arc::new(f)).unwrap()
}

/// `W = R²`, `β = α₁`, `f ≡ c`.
pub fn constant_space(c: f64) -> PrequantSpace {
    PrequantSpace::new(
        Arc::new(StandardAlpha::on_plane_pairs(1)),
        Arc::new(ConstantStructure::standard(2)),
        Arc::new(ScalarFn::constant(2, c)),
    )
    .unwrap()
}
