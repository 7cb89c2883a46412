use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::PrequantError;
use crate::diffgeo::{
    exterior_derivative_fd, reeb_solve, two_form_at, AlmostComplexStructure, ConformalForm,
    ContactData, GeometryError, MetricField, OneForm, PrequantForm, ScalarField,
};
use crate::flow::dense::HermiteCurve;
use crate::flow::ode::{integrate, Method, OdeOptions, RhsError};
use crate::flow::riemannian_gradient;
use crate::linalg;

/// `g_j = dβ(·, j·)` as a metric field on `W`.
#[derive(Clone)]
pub struct CompatibleMetric {
    beta: Arc<dyn OneForm>,
    j: Arc<dyn AlmostComplexStructure>,
}

impl CompatibleMetric {
    pub fn new(beta: Arc<dyn OneForm>, j: Arc<dyn AlmostComplexStructure>) -> Self {
        Self { beta, j }
    }
}

impl MetricField for CompatibleMetric {
    fn dim(&self) -> usize {
        self.beta.dim()
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let omega = two_form_at(self.beta.as_ref(), x).expect("dβ must be evaluable on the chart");
        let g = omega * self.j.matrix(x);
        // symmetrize away rounding so Cholesky sees an exactly symmetric matrix
        (&g + g.transpose()) * 0.5
    }
}

/// The pullback `π*f` of a function on `W` to `S¹ × W`.
#[derive(Clone)]
pub struct FiberInvariant(pub Arc<dyn ScalarField>);

impl ScalarField for FiberInvariant {
    fn dim(&self) -> usize {
        self.0.dim() + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(&x[1..])
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        let d = self.0.differential(&x[1..]);
        let mut out = DVector::zeros(d.len() + 1);
        out.rows_mut(1, d.len()).copy_from(&d);
        out
    }
}

/// The S¹-invariant lift `j̃` of `j` to `ξ = ker(dθ + π*β)`:
/// `(v_θ, w) ↦ (−β(jw), jw)`. The fiber component of the input is ignored,
/// which is exact on ξ.
#[derive(Clone)]
pub struct LiftedStructure {
    beta: Arc<dyn OneForm>,
    j: Arc<dyn AlmostComplexStructure>,
}

impl LiftedStructure {
    pub fn new(beta: Arc<dyn OneForm>, j: Arc<dyn AlmostComplexStructure>) -> Self {
        Self { beta, j }
    }
}

impl AlmostComplexStructure for LiftedStructure {
    fn dim(&self) -> usize {
        self.j.dim() + 1
    }
    fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let w = &x[1..];
        let j = self.j.matrix(w);
        let b = self.beta.eval(w);
        let m = j.nrows();
        let mut out = DMatrix::zeros(m + 1, m + 1);
        out.view_mut((1, 1), (m, m)).copy_from(&j);
        out.view_mut((0, 1), (1, m))
            .copy_from(&(-(b.transpose() * &j)));
        out
    }
}

/// A prequantization space `S¹ × W` over `(W, dβ)` together with a
/// compatible `j` on `W` and a function `f` on `W`.
#[derive(Clone)]
pub struct PrequantSpace {
    beta: Arc<dyn OneForm>,
    j: Arc<dyn AlmostComplexStructure>,
    f: Arc<dyn ScalarField>,
}

/// Pointwise verification of a [`PrequantSpace`] on sample points.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceReport {
    pub points: usize,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub max_j_square_defect: f64,
    pub max_dbeta_defect: f64,
}

impl SpaceReport {
    pub fn passed(&self) -> bool {
        self.max_asymmetry <= 1e-10
            && self.min_eigenvalue > 0.0
            && self.max_j_square_defect <= 1e-10
            && self.max_dbeta_defect <= 1e-6
    }
}

impl PrequantSpace {
    pub fn new(
        beta: Arc<dyn OneForm>,
        j: Arc<dyn AlmostComplexStructure>,
        f: Arc<dyn ScalarField>,
    ) -> Result<Self, PrequantError> {
        let m = beta.dim();
        if m % 2 != 0 || j.dim() != m || f.dim() != m {
            return Err(PrequantError::Contract(format!(
                "base must be even-dimensional with matching β, j, f (got {}, {}, {})",
                m,
                j.dim(),
                f.dim()
            )));
        }
        Ok(Self { beta, j, f })
    }

    pub fn base_dim(&self) -> usize {
        self.beta.dim()
    }

    pub fn beta(&self) -> &Arc<dyn OneForm> {
        &self.beta
    }

    pub fn j(&self) -> &Arc<dyn AlmostComplexStructure> {
        &self.j
    }

    pub fn f(&self) -> &Arc<dyn ScalarField> {
        &self.f
    }

    /// `ω = dβ` at a point of `W`.
    pub fn omega(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        two_form_at(self.beta.as_ref(), x)
    }

    pub fn metric(&self) -> CompatibleMetric {
        CompatibleMetric::new(self.beta.clone(), self.j.clone())
    }

    /// `∇f` with respect to `g_j`.
    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, PrequantError> {
        let v = riemannian_gradient(self.f.as_ref(), &self.metric(), x)
            .map_err(|e| PrequantError::Evaluation(e.to_string()))?;
        if v.iter().all(|c| c.is_finite()) {
            Ok(v)
        } else {
            Err(PrequantError::Evaluation(format!(
                "non-finite gradient at {x:?}"
            )))
        }
    }

    /// `X_f = j∇f`, so that `i_{X_f} ω = −df`.
    pub fn hamiltonian_vector(&self, x: &[f64]) -> Result<DVector<f64>, PrequantError> {
        Ok(self.j.matrix(x) * self.gradient(x)?)
    }

    /// `X ↦ −β(X)∂_θ + X`, the horizontal lift into ξ.
    pub fn horizontal_lift(&self, x: &[f64], v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len() + 1);
        out[0] = -self.beta.eval(x).dot(v);
        out.rows_mut(1, v.len()).copy_from(v);
        out
    }

    /// `λ = dθ + π*β`.
    pub fn lambda(&self) -> Arc<dyn OneForm> {
        Arc::new(PrequantForm::new(self.beta.clone()))
    }

    /// `λ_f = e^{π*f} λ`.
    pub fn lambda_f(&self) -> Arc<dyn OneForm> {
        Arc::new(ConformalForm::new(
            self.lambda(),
            Arc::new(FiberInvariant(self.f.clone())),
        ))
    }

    pub fn lifted_j(&self) -> Arc<dyn AlmostComplexStructure> {
        Arc::new(LiftedStructure::new(self.beta.clone(), self.j.clone()))
    }

    /// Contact data `(λ_f, j̃)` for the lifted cylinders.
    pub fn contact(&self) -> ContactData {
        ContactData::new(self.lambda_f(), self.lifted_j())
    }

    /// Right-hand side of the lift system on the state `(θ, γ, a)`:
    /// `(−2πβ(∇f), 2π∇f, 2πe^{f})`.
    pub fn lift_ode_rhs(&self, state: &[f64]) -> Result<DVector<f64>, PrequantError> {
        let m = self.base_dim();
        if state.len() != m + 2 {
            return Err(PrequantError::Contract(format!(
                "state must have length {}, got {}",
                m + 2,
                state.len()
            )));
        }
        let gamma = &state[1..=m];
        let fv = self.f.value(gamma);
        if !fv.is_finite() {
            return Err(PrequantError::Evaluation(format!(
                "f is not finite at {gamma:?}"
            )));
        }
        let grad = self.gradient(gamma)?;
        let mut out = DVector::zeros(m + 2);
        out[0] = -TAU * self.beta.eval(gamma).dot(&grad);
        out.rows_mut(1, m).copy_from(&(grad * TAU));
        out[m + 1] = TAU * fv.exp();
        Ok(out)
    }

    /// Checks compatibility of `j` with `dβ`, `j² = −I`, and the closed-form
    /// `dβ` against central differences at each point.
    pub fn verify(&self, points: &[Vec<f64>]) -> Result<SpaceReport, PrequantError> {
        let m = self.base_dim();
        let mut report = SpaceReport {
            points: points.len(),
            max_asymmetry: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_j_square_defect: 0.0,
            max_dbeta_defect: 0.0,
        };
        for x in points {
            let omega = self.omega(x)?;
            let j = self.j.matrix(x);
            let g = &omega * &j;
            let scale = g.amax().max(1.0);
            report.max_asymmetry = report
                .max_asymmetry
                .max(linalg::symmetry_defect(&g) / scale);
            report.min_eigenvalue = report
                .min_eigenvalue
                .min(linalg::symmetric_eigen_range(&g).0);
            let sq = &j * &j + DMatrix::identity(m, m);
            report.max_j_square_defect = report
                .max_j_square_defect
                .max(sq.amax() / j.amax().max(1.0).powi(2));
            if self.beta.exterior_derivative(x).is_some() {
                let fd = exterior_derivative_fd(self.beta.as_ref(), x, 1e-5)?;
                let defect = linalg::max_abs_diff(&fd, &omega) / omega.amax().max(1.0);
                report.max_dbeta_defect = report.max_dbeta_defect.max(defect);
            }
        }
        Ok(report)
    }
}

/// Return time of the Reeb flow of `λ_f` through a critical point of `f`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReebPeriod {
    pub expected: f64,
    pub measured: f64,
    pub relative_error: f64,
    /// Distance in `W` between start and return point.
    pub closure_defect: f64,
}

/// Integrates `X_{λ_f}` from `(θ₀, p)` until the fiber angle has advanced by
/// `2π` and compares the elapsed time with `2πe^{f(p)}`.
pub fn reeb_period(
    space: &PrequantSpace,
    p: &[f64],
    theta0: f64,
    rtol: f64,
) -> Result<ReebPeriod, PrequantError> {
    let df = space.f.differential(p);
    if df.amax() > 1e-10 {
        return Err(PrequantError::Contract(format!(
            "p is not a critical point of f (|df| = {:e})",
            df.amax()
        )));
    }
    let expected = TAU * space.f.value(p).exp();
    let lambda = space.lambda_f();
    let mut rhs = |t: f64, y: &DVector<f64>| {
        reeb_solve(lambda.as_ref(), y.as_slice()).map_err(|e| RhsError {
            t,
            message: e.to_string(),
        })
    };
    let mut y0 = DVector::zeros(p.len() + 1);
    y0[0] = theta0;
    y0.rows_mut(1, p.len()).copy_from_slice(p);
    let opts = OdeOptions {
        method: Method::DormandPrince,
        rtol,
        atol: rtol * 1e-2,
        h_max: expected / 16.0,
        ..Default::default()
    };
    let target = theta0 + TAU;
    let sol = integrate(
        &mut rhs,
        0.0,
        y0.clone(),
        2.0 * expected,
        &opts,
        &mut |_, y| y[0] >= target,
    )
    .map_err(|f| PrequantError::Integration {
        source: f.error,
        partial: None,
    })?;
    if *sol.last().index(0) < target {
        return Err(PrequantError::Evaluation(
            "Reeb orbit did not close within twice the expected period".into(),
        ));
    }
    let curve = HermiteCurve::from_solution(&sol, &mut rhs)
        .map_err(|e| PrequantError::Evaluation(e.to_string()))?;
    let k = sol.t.len() - 1;
    let (mut lo, mut hi) = (sol.t[k - 1], sol.t[k]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if curve.eval(mid).expect("inside")[0] < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let measured = 0.5 * (lo + hi);
    let end = curve.eval(measured).expect("inside");
    let closure_defect = (end.rows(1, p.len()) - DVector::from_column_slice(p)).norm();
    Ok(ReebPeriod {
        expected,
        measured,
        relative_error: (measured - expected).abs() / expected,
        closure_defect,
    })
}
