use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::GeometryError;
use crate::linalg;

/// Default relative step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A smooth function on a chart with a closed-form differential.
///
/// Angular coordinates may be passed lifted; implementations are periodic in
/// them.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn differential(&self, x: &[f64]) -> DVector<f64>;
}

/// A 1-form, optionally with a closed-form exterior derivative given as the
/// antisymmetric matrix `dω(∂_i, ∂_j)`.
pub trait OneForm: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> DVector<f64>;
    fn exterior_derivative(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// A field of symmetric positive-definite matrices.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;
    fn metric(&self, x: &[f64]) -> DMatrix<f64>;
    /// Dual metric. The default inverts `metric` with LU.
    fn inverse(&self, x: &[f64]) -> DMatrix<f64> {
        linalg::inverse(&self.metric(x)).expect("metric must be invertible")
    }
}

/// An endomorphism field squaring to minus the identity (on the bundle it
/// acts on).
pub trait AlmostComplexStructure: Send + Sync {
    fn dim(&self) -> usize;
    fn matrix(&self, x: &[f64]) -> DMatrix<f64>;
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        (**self).differential(x)
    }
}

impl<T: OneForm + ?Sized> OneForm for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        (**self).eval(x)
    }
    fn exterior_derivative(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        (**self).exterior_derivative(x)
    }
}

impl<T: MetricField + ?Sized> MetricField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).metric(x)
    }
    fn inverse(&self, x: &[f64]) -> DMatrix<f64> {
        (**self).inverse(x)
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&[f64]) -> DVector<f64> + Send + Sync;
type MatrixFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// Scalar field assembled from closures.
pub struct ScalarFn {
    dim: usize,
    value: Box<ValueFn>,
    differential: Box<VectorFn>,
}

impl ScalarFn {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        differential: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Box::new(value),
            differential: Box::new(differential),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(dim, move |_| c, move |_| DVector::zeros(dim))
    }
}

impl ScalarField for ScalarFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        (self.differential)(x)
    }
}

/// 1-form assembled from closures.
pub struct FormFn {
    dim: usize,
    eval: Box<VectorFn>,
    d: Option<Box<MatrixFn>>,
}

impl FormFn {
    pub fn new(dim: usize, eval: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Box::new(eval),
            d: None,
        }
    }

    pub fn with_derivative(
        mut self,
        d: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.d = Some(Box::new(d));
        self
    }
}

impl OneForm for FormFn {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        (self.eval)(x)
    }
    fn exterior_derivative(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.d.as_ref().map(|d| d(x))
    }
}

/// `α_n = Σ x_i dy_i - y_i dx_i` on `R^{2n}`, coordinates `(x_1, y_1, ..., x_n, y_n)`
/// starting at `offset` inside a chart of dimension `dim`.
#[derive(Debug, Clone)]
pub struct StandardAlpha {
    pub n: usize,
    pub offset: usize,
    pub dim: usize,
}

impl StandardAlpha {
    pub fn on_plane_pairs(n: usize) -> Self {
        Self {
            n,
            offset: 0,
            dim: 2 * n,
        }
    }
}

impl OneForm for StandardAlpha {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim);
        for i in 0..self.n {
            let (ix, iy) = (self.offset + 2 * i, self.offset + 2 * i + 1);
            w[ix] = -x[iy];
            w[iy] = x[ix];
        }
        w
    }
    fn exterior_derivative(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.n {
            let (ix, iy) = (self.offset + 2 * i, self.offset + 2 * i + 1);
            d[(ix, iy)] = 2.0;
            d[(iy, ix)] = -2.0;
        }
        Some(d)
    }
}

/// `dθ + π*β` on `S¹ × W`, with θ the first coordinate.
#[derive(Clone)]
pub struct PrequantForm {
    beta: Arc<dyn OneForm>,
}

impl PrequantForm {
    pub fn new(beta: Arc<dyn OneForm>) -> Self {
        Self { beta }
    }

    pub fn beta(&self) -> &Arc<dyn OneForm> {
        &self.beta
    }
}

impl OneForm for PrequantForm {
    fn dim(&self) -> usize {
        self.beta.dim() + 1
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        let b = self.beta.eval(&x[1..]);
        let mut w = DVector::zeros(b.len() + 1);
        w[0] = 1.0;
        w.rows_mut(1, b.len()).copy_from(&b);
        w
    }
    fn exterior_derivative(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let db = self.beta.exterior_derivative(&x[1..])?;
        let m = db.nrows();
        let mut d = DMatrix::zeros(m + 1, m + 1);
        d.view_mut((1, 1), (m, m)).copy_from(&db);
        Some(d)
    }
}

/// The conformally rescaled form `e^{f} λ`.
///
/// Its exterior derivative `e^{f}(df ∧ λ + dλ)` is available whenever the
/// base form supplies one.
#[derive(Clone)]
pub struct ConformalForm {
    base: Arc<dyn OneForm>,
    factor: Arc<dyn ScalarField>,
}

impl ConformalForm {
    pub fn new(base: Arc<dyn OneForm>, factor: Arc<dyn ScalarField>) -> Self {
        assert_eq!(base.dim(), factor.dim());
        Self { base, factor }
    }

    pub fn base(&self) -> &Arc<dyn OneForm> {
        &self.base
    }

    pub fn factor(&self) -> &Arc<dyn ScalarField> {
        &self.factor
    }
}

impl OneForm for ConformalForm {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        self.base.eval(x) * self.factor.value(x).exp()
    }
    fn exterior_derivative(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let d_base = self.base.exterior_derivative(x)?;
        let ef = self.factor.value(x).exp();
        let df = self.factor.differential(x);
        let lam = self.base.eval(x);
        Some((linalg::wedge_covectors(&df, &lam) + d_base) * ef)
    }
}

/// Constant metric matrix.
#[derive(Debug, Clone)]
pub struct ConstantMetric(pub DMatrix<f64>);

impl ConstantMetric {
    pub fn euclidean(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn metric(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// Constant almost complex structure.
#[derive(Debug, Clone)]
pub struct ConstantStructure(pub DMatrix<f64>);

impl ConstantStructure {
    pub fn standard(dim: usize) -> Self {
        Self(linalg::standard_complex_structure(dim))
    }
}

impl AlmostComplexStructure for ConstantStructure {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn matrix(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
}

fn fd_step(h: f64, xi: f64) -> f64 {
    h * xi.abs().max(1.0)
}

/// Central-difference exterior derivative of a 1-form:
/// `dω_{ij} = ∂_i ω_j − ∂_j ω_i`, second order in `h`.
///
/// The step for coordinate `i` is `h·max(1, |x_i|)`.
pub fn exterior_derivative_fd(
    form: &dyn OneForm,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>, GeometryError> {
    let m = form.dim();
    if x.len() != m {
        return Err(GeometryError::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    let mut partials = DMatrix::zeros(m, m);
    let mut probe = x.to_vec();
    for i in 0..m {
        let hi = fd_step(h, x[i]);
        probe[i] = x[i] + hi;
        let plus = form.eval(&probe);
        probe[i] = x[i] - hi;
        let minus = form.eval(&probe);
        probe[i] = x[i];
        let row = (plus - minus) / (2.0 * hi);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::EvaluationDomain(format!(
                "non-finite 1-form values near coordinate {i}"
            )));
        }
        partials.set_row(i, &row.transpose());
    }
    Ok(&partials - partials.transpose())
}

/// Central-difference differential of a scalar field.
pub fn differential_fd(
    field: &dyn ScalarField,
    x: &[f64],
    h: f64,
) -> Result<DVector<f64>, GeometryError> {
    let m = field.dim();
    if x.len() != m {
        return Err(GeometryError::DimensionMismatch {
            expected: m,
            found: x.len(),
        });
    }
    let mut out = DVector::zeros(m);
    let mut probe = x.to_vec();
    for i in 0..m {
        let hi = fd_step(h, x[i]);
        probe[i] = x[i] + hi;
        let plus = field.value(&probe);
        probe[i] = x[i] - hi;
        let minus = field.value(&probe);
        probe[i] = x[i];
        out[i] = (plus - minus) / (2.0 * hi);
        if !out[i].is_finite() {
            return Err(GeometryError::EvaluationDomain(format!(
                "non-finite scalar values near coordinate {i}"
            )));
        }
    }
    Ok(out)
}

/// `dω` from the closed form when available, otherwise by finite differences
/// at the default step.
pub fn two_form_at(form: &dyn OneForm, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    match form.exterior_derivative(x) {
        Some(d) => Ok(d),
        None => exterior_derivative_fd(form, x, DEFAULT_FD_STEP),
    }
}
