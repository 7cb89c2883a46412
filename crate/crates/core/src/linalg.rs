//! Small dense linear-algebra helpers shared by the geometry and flow code.
//!
//! Every system in this crate has dimension at most 9, so plain LU with
//! partial pivoting and symmetric eigen-decomposition are used throughout.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` with partial-pivoting LU. Returns `None` for a singular
/// (or numerically singular) matrix.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Inverse through LU; `None` when singular.
pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().try_inverse()
}

/// Smallest and largest eigenvalue of the symmetric part of `a`.
pub fn symmetric_eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Largest absolute deviation from antisymmetry, `max |a_ij + a_ji|`.
pub fn antisymmetry_defect(a: &DMatrix<f64>) -> f64 {
    (a + a.transpose()).amax()
}

/// Largest absolute deviation from symmetry, `max |a_ij - a_ji|`.
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

/// The standard complex structure on `R^{2m}` in the ordering
/// `(x_1, y_1, ..., x_m, y_m)`: `d/dx_i -> d/dy_i`, `d/dy_i -> -d/dx_i`.
pub fn standard_complex_structure(dim: usize) -> DMatrix<f64> {
    assert!(dim % 2 == 0, "complex structure needs even dimension");
    let mut j = DMatrix::zeros(dim, dim);
    for k in 0..dim / 2 {
        j[(2 * k + 1, 2 * k)] = 1.0;
        j[(2 * k, 2 * k + 1)] = -1.0;
    }
    j
}

/// Outer wedge of two covectors as an antisymmetric matrix:
/// `(a ^ b)_{ij} = a_i b_j - a_j b_i`.
pub fn wedge_covectors(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose() - b * a.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_structure_squares_to_minus_identity() {
        let j = standard_complex_structure(6);
        let sq = &j * &j;
        assert!(max_abs_diff(&sq, &(-DMatrix::identity(6, 6))) < 1e-15);
        assert_eq!(j[(1, 0)], 1.0);
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(solve(&a, &b).is_none());
    }
}
