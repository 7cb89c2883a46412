use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::forms::{two_form_at, AlmostComplexStructure, OneForm, ScalarField};
use super::wedge::contact_wedge_volume;
use super::GeometryError;
use crate::linalg;

const REEB_RESIDUAL_TOL: f64 = 1e-10;

/// Evaluates `λ ∧ (dλ)^n` on the coordinate basis of a `(2n+1)`-dimensional
/// chart. A nonzero value certifies the contact condition at `x`.
pub fn contact_volume(lambda: &dyn OneForm, x: &[f64], n: usize) -> Result<f64, GeometryError> {
    let m = 2 * n + 1;
    if lambda.dim() != m || x.len() != m {
        return Err(GeometryError::DimensionMismatch {
            expected: m,
            found: lambda.dim(),
        });
    }
    if n > 3 {
        return Err(GeometryError::Unsupported(format!(
            "wedge powers beyond n = 3 (got {n})"
        )));
    }
    let lam = lambda.eval(x);
    let dl = two_form_at(lambda, x)?;
    Ok(contact_wedge_volume(lam.as_slice(), &dl, n))
}

/// Solves `i_X dλ = 0`, `λ(X) = 1` for the Reeb vector at `x`.
///
/// The bordered system `[[dλ, λ], [λᵀ, 0]]·(X, μ) = (0, 1)` is nonsingular
/// exactly when λ is contact at `x`; the multiplier μ vanishes at the
/// solution.
pub fn reeb_solve(lambda: &dyn OneForm, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
    let lam = lambda.eval(x);
    let dl = two_form_at(lambda, x)?;
    reeb_from_parts(&lam, &dl)
}

pub(crate) fn reeb_from_parts(
    lam: &DVector<f64>,
    dl: &DMatrix<f64>,
) -> Result<DVector<f64>, GeometryError> {
    let m = lam.len();
    let mut sys = DMatrix::zeros(m + 1, m + 1);
    sys.view_mut((0, 0), (m, m)).copy_from(dl);
    sys.view_mut((0, m), (m, 1)).copy_from(lam);
    sys.view_mut((m, 0), (1, m)).copy_from(&lam.transpose());
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = linalg::solve(&sys, &rhs).ok_or(GeometryError::NotContact {
        residual: f64::INFINITY,
    })?;
    let reeb = sol.rows(0, m).into_owned();
    let residual = (dl.transpose() * &reeb)
        .amax()
        .max((lam.dot(&reeb) - 1.0).abs());
    let scale = dl.amax().max(1.0) * reeb.amax().max(1.0);
    if residual > REEB_RESIDUAL_TOL * scale {
        return Err(GeometryError::NotContact { residual });
    }
    Ok(reeb)
}

/// A contact form together with a complex structure on its contact planes.
///
/// `j_xi` is given as a matrix on the full tangent space; only its action on
/// `ξ = ker λ` matters, and callers always compose it with
/// [`ContactData::xi_projection`].
#[derive(Clone)]
pub struct ContactData {
    lambda: Arc<dyn OneForm>,
    j_xi: Arc<dyn AlmostComplexStructure>,
}

impl ContactData {
    pub fn new(lambda: Arc<dyn OneForm>, j_xi: Arc<dyn AlmostComplexStructure>) -> Self {
        assert_eq!(lambda.dim(), j_xi.dim());
        Self { lambda, j_xi }
    }

    pub fn dim(&self) -> usize {
        self.lambda.dim()
    }

    pub fn lambda(&self) -> &Arc<dyn OneForm> {
        &self.lambda
    }

    pub fn j_xi(&self) -> &Arc<dyn AlmostComplexStructure> {
        &self.j_xi
    }

    pub fn reeb(&self, x: &[f64]) -> Result<DVector<f64>, GeometryError> {
        reeb_solve(self.lambda.as_ref(), x)
    }

    /// `π_λ = I − X_λ λᵀ`, the projection onto ξ along the Reeb field.
    pub fn xi_projection(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let lam = self.lambda.eval(x);
        let reeb = self.reeb(x)?;
        Ok(projection_from(&reeb, &lam))
    }

    /// Everything the Cauchy–Riemann residual needs at one point.
    pub fn frame(&self, x: &[f64]) -> Result<ContactFrame, GeometryError> {
        let lambda = self.lambda.eval(x);
        let dl = two_form_at(self.lambda.as_ref(), x)?;
        let reeb = reeb_from_parts(&lambda, &dl)?;
        let projection = projection_from(&reeb, &lambda);
        let j = self.j_xi.matrix(x);
        Ok(ContactFrame {
            lambda,
            reeb,
            projection,
            j,
        })
    }
}

fn projection_from(reeb: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
    let m = lam.len();
    DMatrix::identity(m, m) - reeb * lam.transpose()
}

/// Contact data evaluated at a point.
#[derive(Debug, Clone)]
pub struct ContactFrame {
    pub lambda: DVector<f64>,
    pub reeb: DVector<f64>,
    pub projection: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

/// Reeb field of `e^{f}λ` through the splitting of λ: solves
/// `i_{X_f} dλ = −df + df(X_λ) λ` for `X_f ∈ ξ` and returns
/// `e^{−f}(X_λ − X_f)`.
pub fn reeb_rescaled(
    contact: &ContactData,
    f: &dyn ScalarField,
    x: &[f64],
) -> Result<DVector<f64>, GeometryError> {
    let lam = contact.lambda.eval(x);
    let dl = two_form_at(contact.lambda.as_ref(), x)?;
    let reeb = reeb_from_parts(&lam, &dl)?;
    let df = f.differential(x);
    let rhs_form = -&df + &lam * df.dot(&reeb);

    // i_X dλ has components (dλᵀ X)_j; constrain λ(X) = 0.
    let m = lam.len();
    let mut sys = DMatrix::zeros(m + 1, m + 1);
    sys.view_mut((0, 0), (m, m)).copy_from(&dl.transpose());
    sys.view_mut((0, m), (m, 1)).copy_from(&lam);
    sys.view_mut((m, 0), (1, m)).copy_from(&lam.transpose());
    let mut rhs = DVector::zeros(m + 1);
    rhs.rows_mut(0, m).copy_from(&rhs_form);
    let sol = linalg::solve(&sys, &rhs)
        .ok_or_else(|| GeometryError::Degenerate("dλ restricted to ξ is singular".into()))?;
    let x_f = sol.rows(0, m).into_owned();
    Ok((reeb - x_f) * (-f.value(x)).exp())
}

/// The R-invariant almost complex structure on `R × M` at a point, as a
/// matrix on `R ⊕ T_pM` with the `∂_a` direction first:
/// `J̃∂_a = X_λ`, `J̃X_λ = −∂_a`, `J̃|_ξ = J`.
pub fn rinvariant_extension(
    contact: &ContactData,
    x: &[f64],
) -> Result<DMatrix<f64>, GeometryError> {
    let frame = contact.frame(x)?;
    let m = frame.lambda.len();
    let mut out = DMatrix::zeros(m + 1, m + 1);
    out.view_mut((1, 0), (m, 1)).copy_from(&frame.reeb);
    // v = λ(v) X + π v  ↦  −λ(v) ∂_a + J π v
    out.view_mut((0, 1), (1, m))
        .copy_from(&(-frame.lambda.transpose()));
    let jp = &frame.j * &frame.projection;
    out.view_mut((1, 1), (m, m)).copy_from(&jp);
    Ok(out)
}

/// Result of checking `g = ω(·, J·)`.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    #[serde(skip)]
    pub metric: DMatrix<f64>,
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    pub symmetric: bool,
    pub positive_definite: bool,
}

impl CompatibilityReport {
    pub fn compatible(&self) -> bool {
        self.symmetric && self.positive_definite
    }
}

/// `g_{ij} = ω(∂_i, J∂_j)`. Incompatibility is reported, not raised.
pub fn compatibility_metric(omega: &DMatrix<f64>, j: &DMatrix<f64>) -> CompatibilityReport {
    let metric = omega * j;
    let asymmetry = linalg::symmetry_defect(&metric);
    let scale = metric.amax().max(1.0);
    let symmetric = asymmetry <= 1e-10 * scale;
    let (min_eigenvalue, _) = linalg::symmetric_eigen_range(&metric);
    CompatibilityReport {
        positive_definite: min_eigenvalue > 0.0,
        metric,
        asymmetry,
        min_eigenvalue,
        symmetric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::forms::{
        ConformalForm, ConstantStructure, FormFn, PrequantForm, ScalarFn, StandardAlpha,
    };
    use crate::linalg::{max_abs_diff, standard_complex_structure};

    fn lambda0(n: usize) -> Arc<dyn OneForm> {
        Arc::new(PrequantForm::new(Arc::new(StandardAlpha::on_plane_pairs(
            n,
        ))))
    }

    /// J on ξ₀ for dθ + α_n: lift of the standard structure, v ↦ −α(J₀w)∂_θ + J₀w.
    struct LiftedStandard(usize);
    impl AlmostComplexStructure for LiftedStandard {
        fn dim(&self) -> usize {
            2 * self.0 + 1
        }
        fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
            let n = self.0;
            let j0 = standard_complex_structure(2 * n);
            let alpha = StandardAlpha::on_plane_pairs(n).eval(&x[1..]);
            let mut m = DMatrix::zeros(2 * n + 1, 2 * n + 1);
            m.view_mut((1, 1), (2 * n, 2 * n)).copy_from(&j0);
            let top = -(alpha.transpose() * &j0);
            m.view_mut((0, 1), (1, 2 * n)).copy_from(&top);
            m
        }
    }

    #[test]
    fn contact_volume_of_standard_forms() {
        let expected = [2.0, 8.0, 48.0];
        for n in 1..=3 {
            let p: Vec<f64> = (0..2 * n + 1).map(|k| 0.3 * k as f64 - 0.4).collect();
            let v = contact_volume(lambda0(n).as_ref(), &p, n).unwrap();
            assert!((v - expected[n - 1]).abs() < 1e-12, "n={n}: {v}");
        }
    }

    #[test]
    fn closed_form_is_not_contact() {
        let dtheta = FormFn::new(3, |_| DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_eq!(contact_volume(&dtheta, &[0.0, 1.0, 2.0], 1).unwrap(), 0.0);
        assert!(matches!(
            reeb_solve(&dtheta, &[0.0, 1.0, 2.0]),
            Err(GeometryError::NotContact { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            contact_volume(lambda0(1).as_ref(), &[0.0, 0.0, 0.0], 2),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn reeb_of_prequantization_form_is_fiber_direction() {
        let r = reeb_solve(lambda0(2).as_ref(), &[1.0, 0.3, -0.2, 0.9, 0.5]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r.rows(1, 4).amax() < 1e-12);
    }

    #[test]
    fn reeb_scales_inversely() {
        let two_dtheta = FormFn::new(3, |x| DVector::from_vec(vec![2.0, -2.0 * x[2], 2.0 * x[1]]))
            .with_derivative(|_| {
                let mut d = DMatrix::zeros(3, 3);
                d[(1, 2)] = 4.0;
                d[(2, 1)] = -4.0;
                d
            });
        let r = reeb_solve(&two_dtheta, &[0.0, 0.0, 0.0]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rescaled_reeb_for_constant_factor() {
        let contact = ContactData::new(lambda0(1), Arc::new(LiftedStandard(1)));
        let f = ScalarFn::constant(3, 0.7);
        let x = [0.1, 0.4, -0.3];
        let r = reeb_rescaled(&contact, &f, &x).unwrap();
        let expected = contact.reeb(&x).unwrap() * (-0.7f64).exp();
        assert!((r - expected).amax() < 1e-13);
    }

    #[test]
    fn rescaled_reeb_matches_direct_solve() {
        let f: Arc<dyn ScalarField> = Arc::new(ScalarFn::new(
            3,
            |x| 0.4 * (x[0] + 0.5 * x[1]).sin() + 0.2 * x[2] * x[2],
            |x| {
                let c = (x[0] + 0.5 * x[1]).cos();
                DVector::from_vec(vec![0.4 * c, 0.2 * c, 0.4 * x[2]])
            },
        ));
        let contact = ContactData::new(lambda0(1), Arc::new(LiftedStandard(1)));
        let scaled = ConformalForm::new(lambda0(1), f.clone());
        let x = [2.1, -0.6, 0.8];
        let a = reeb_rescaled(&contact, f.as_ref(), &x).unwrap();
        let b = reeb_solve(&scaled, &x).unwrap();
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn extension_squares_to_minus_identity() {
        let contact = ContactData::new(lambda0(2), Arc::new(LiftedStandard(2)));
        let x = [0.3, 1.2, -0.4, 0.7, 2.0];
        let jt = rinvariant_extension(&contact, &x).unwrap();
        let sq = &jt * &jt;
        assert!(max_abs_diff(&sq, &(-DMatrix::identity(6, 6))) < 1e-12);
        let reeb = contact.reeb(&x).unwrap();
        assert!((jt.column(0).rows(1, 5) - &reeb).amax() == 0.0);
        assert_eq!(jt[(0, 0)], 0.0);
    }

    #[test]
    fn extension_restricts_to_j_on_xi() {
        let contact = ContactData::new(lambda0(1), Arc::new(LiftedStandard(1)));
        let x = [0.0, -0.8, 0.35];
        let jt = rinvariant_extension(&contact, &x).unwrap();
        let lam = contact.lambda().eval(&x);
        let j = contact.j_xi().matrix(&x);
        // horizontal lift of ∂_x lies in ξ
        let mut v = DVector::zeros(3);
        v[1] = 1.0;
        v[0] = -lam[1];
        let mut v_ext = DVector::zeros(4);
        v_ext.rows_mut(1, 3).copy_from(&v);
        let image = &jt * v_ext;
        assert!(image[0].abs() < 1e-12);
        assert!((image.rows(1, 3) - &j * &v).amax() < 1e-12);
    }

    #[test]
    fn compatibility_metrics_of_standard_structures() {
        let j = standard_complex_structure(2);
        let omega = -j.clone();
        let r = compatibility_metric(&omega, &j);
        assert!(max_abs_diff(&r.metric, &DMatrix::identity(2, 2)) < 1e-15);
        assert!(r.compatible());
        let r2 = compatibility_metric(&(omega * 2.0), &j);
        assert!(max_abs_diff(&r2.metric, &(DMatrix::identity(2, 2) * 2.0)) < 1e-15);
        // −J is anti-compatible
        let bad = compatibility_metric(
            &(-standard_complex_structure(2)),
            &(-standard_complex_structure(2)),
        );
        assert!(!bad.positive_definite);
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(!compatibility_metric(&skew, &DMatrix::identity(2, 2)).symmetric);
    }

    #[test]
    fn constant_structure_is_usable_as_contact_j() {
        let c = ContactData::new(
            lambda0(1),
            Arc::new(ConstantStructure(DMatrix::identity(3, 3))),
        );
        assert_eq!(c.dim(), 3);
    }
}
