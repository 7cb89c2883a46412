use nalgebra::DVector;

use super::FlowError;
use crate::diffgeo::{MetricField, ScalarField};

/// `∇F = g⁻¹ dF`, solved through a Cholesky factorization so that a
/// non-positive-definite metric sample is reported rather than used.
pub fn riemannian_gradient(
    f: &dyn ScalarField,
    g: &dyn MetricField,
    x: &[f64],
) -> Result<DVector<f64>, FlowError> {
    let df = f.differential(x);
    gradient_from_differential(&df, g, x)
}

pub(crate) fn gradient_from_differential(
    df: &DVector<f64>,
    g: &dyn MetricField,
    x: &[f64],
) -> Result<DVector<f64>, FlowError> {
    let gm = g.metric(x);
    let chol = gm
        .clone()
        .cholesky()
        .ok_or_else(|| FlowError::NotPositiveDefinite { point: x.to_vec() })?;
    Ok(chol.solve(df))
}

/// Entries `(A, B, C)` of the dual metric `g⁻¹` on a 2-dimensional chart, so
/// that `∇F = (A F_s + B F_t, B F_s + C F_t)`.
pub fn dual_metric_entries(g: &dyn MetricField, x: &[f64]) -> Result<(f64, f64, f64), FlowError> {
    assert_eq!(g.dim(), 2, "dual entries are defined for surface charts");
    let gm = g.metric(x);
    let chol = gm
        .cholesky()
        .ok_or_else(|| FlowError::NotPositiveDefinite { point: x.to_vec() })?;
    let inv = chol.inverse();
    Ok((inv[(0, 0)], inv[(0, 1)], inv[(1, 1)]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::ConstantMetric;
    use crate::spiral::FDeltaField;
    use crate::spiral::SpiralParams;
    use nalgebra::DMatrix;

    #[test]
    fn euclidean_and_scaled_in_linear_region() {
        let f = FDeltaField(SpiralParams::new(0.5));
        let v = riemannian_gradient(&f, &ConstantMetric::euclidean(2), &[-1.2, 0.4]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.0]);
        let g = ConstantMetric(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let v = riemannian_gradient(&f, &g, &[-1.2, 0.4]).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15 && v[1] == 0.0);
    }

    #[test]
    fn matches_direct_solve_and_dual_entries() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let g = ConstantMetric(DMatrix::from_row_slice(2, 2, &[1.7, 0.4, 0.4, 0.9]));
        let x = [-0.5, 1.0];
        let v = riemannian_gradient(&f, &g, &x).unwrap();
        let df = f.differential(&x);
        let direct = crate::linalg::solve(&g.0, &df).unwrap();
        assert!((&v - &direct).amax() < 1e-12);
        let (a, b, c) = dual_metric_entries(&g, &x).unwrap();
        assert!((v[0] - (a * df[0] + b * df[1])).abs() < 1e-12);
        assert!((v[1] - (b * df[0] + c * df[1])).abs() < 1e-12);
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let g = ConstantMetric(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(
            riemannian_gradient(&f, &g, &[-0.5, 0.0]),
            Err(FlowError::NotPositiveDefinite { .. })
        ));
    }
}
