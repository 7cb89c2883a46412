use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::KnotError;
use crate::diffgeo::{
    two_form_power_volume, AlmostComplexStructure, MetricField, OneForm, ScalarField,
};
use crate::linalg;
use crate::spiral::{plane_profile, plane_profile_differential};

/// `α_{n−1}(p)` as a covector on `R^{2(n−1)}`.
pub(crate) fn alpha_covector(p: &[f64]) -> DVector<f64> {
    let mut a = DVector::zeros(p.len());
    for i in (0..p.len()).step_by(2) {
        a[i] = -p[i + 1];
        a[i + 1] = p[i];
    }
    a
}

/// `dα_{n−1} = 2 Σ dx_i ∧ dy_i` as an antisymmetric matrix.
pub(crate) fn d_alpha(dim: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(dim, dim);
    for i in (0..dim).step_by(2) {
        d[(i, i + 1)] = 2.0;
        d[(i + 1, i)] = -2.0;
    }
    d
}

/// `W = S¹ × R^{2(n−1)} × R` with coordinates `(θ, x_1, y_1, …, ρ)`,
/// the form `β = e^{−2ρ}(dθ + α_{n−1})` and the structure `j₁` built from a
/// constant `j₀` on `R^{2(n−1)}`.
#[derive(Debug, Clone)]
pub struct WSpace {
    n: usize,
    j0: DMatrix<f64>,
}

/// Largest defects of the `W` identities over a sample.
#[derive(Debug, Clone, Serialize)]
pub struct WReport {
    pub points: usize,
    pub max_j_square_defect: f64,
    pub max_metric_defect: f64,
    pub max_asymmetry: f64,
    pub min_metric_eigenvalue: f64,
    /// Largest relative deviation of `(dβ)^n` from `2ⁿ n! e^{−2nρ}`.
    pub max_volume_defect: f64,
    pub min_volume: f64,
}

impl WSpace {
    /// `j₀` must be a constant structure on `R^{2(n−1)}` compatible with
    /// `dα_{n−1}`; `None` selects `∂_{x_i} ↦ ∂_{y_i}`.
    pub fn new(n: usize, j0: Option<DMatrix<f64>>) -> Result<Self, KnotError> {
        if n == 0 || n > 3 {
            return Err(KnotError::Contract(format!("n must be in 1..=3, got {n}")));
        }
        let k = 2 * (n - 1);
        let j0 = j0.unwrap_or_else(|| linalg::standard_complex_structure(k));
        if j0.nrows() != k || j0.ncols() != k {
            return Err(KnotError::Contract(format!("j0 must be {k} x {k}")));
        }
        if k > 0 {
            let sq = &j0 * &j0 + DMatrix::identity(k, k);
            if sq.amax() > 1e-12 {
                return Err(KnotError::Verification(format!(
                    "j0² + I has entry {:e}",
                    sq.amax()
                )));
            }
            let g0 = d_alpha(k) * &j0;
            if linalg::symmetry_defect(&g0) > 1e-12 || linalg::symmetric_eigen_range(&g0).0 <= 0.0 {
                return Err(KnotError::Verification(
                    "j0 is not compatible with dα".into(),
                ));
            }
        }
        Ok(Self { n, j0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn j0(&self) -> &DMatrix<f64> {
        &self.j0
    }

    pub(crate) fn rho_index(&self) -> usize {
        2 * self.n - 1
    }

    fn p_range(&self) -> std::ops::Range<usize> {
        1..2 * self.n - 1
    }

    /// `g₀ = dα_{n−1}(·, j₀·)`.
    pub fn g0(&self) -> DMatrix<f64> {
        d_alpha(2 * (self.n - 1)) * &self.j0
    }

    pub fn beta_vec(&self, x: &[f64]) -> DVector<f64> {
        let m = self.dim();
        let e = (-2.0 * x[m - 1]).exp();
        let mut b = DVector::zeros(m);
        b[0] = e;
        let a = alpha_covector(&x[self.p_range()]);
        b.rows_mut(1, m - 2).copy_from(&(a * e));
        b
    }

    /// `dβ = e^{−2ρ}(−2dρ∧dθ − 2dρ∧α_{n−1} + dα_{n−1})`.
    pub fn d_beta(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let r = self.rho_index();
        let mut lead = DVector::zeros(m);
        lead[0] = 1.0;
        lead.rows_mut(1, m - 2)
            .copy_from(&alpha_covector(&x[self.p_range()]));
        let mut e_rho = DVector::zeros(m);
        e_rho[r] = 1.0;
        let mut d = linalg::wedge_covectors(&e_rho, &lead) * -2.0;
        let mut block = d.view_mut((1, 1), (m - 2, m - 2));
        block += d_alpha(m - 2);
        d * (-2.0 * x[r]).exp()
    }

    pub fn j1(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let r = self.rho_index();
        let rho = x[r];
        let a = alpha_covector(&x[self.p_range()]);
        let mut j = DMatrix::zeros(m, m);
        j[(0, r)] = -(2.0 * rho).exp();
        j[(r, 0)] = (-2.0 * rho).exp();
        for k in 0..m - 2 {
            let jv = self.j0.column(k);
            j.view_mut((1, 1 + k), (m - 2, 1)).copy_from(&jv);
            j[(0, 1 + k)] = -a.dot(&jv);
            j[(r, 1 + k)] = a[k] * (-2.0 * rho).exp();
        }
        j
    }

    /// `2dρ² + 2e^{−4ρ}(dθ + α)² + e^{−2ρ} dα∘(I × j₀)`.
    pub fn g_j1(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let r = self.rho_index();
        let rho = x[r];
        let mut lead = DVector::zeros(m);
        lead[0] = 1.0;
        lead.rows_mut(1, m - 2)
            .copy_from(&alpha_covector(&x[self.p_range()]));
        let mut g = &lead * lead.transpose() * (2.0 * (-4.0 * rho).exp());
        g[(r, r)] += 2.0;
        let mut block = g.view_mut((1, 1), (m - 2, m - 2));
        block += self.g0() * (-2.0 * rho).exp();
        g
    }

    pub fn beta_form(&self) -> Arc<dyn OneForm> {
        Arc::new(WBeta(self.clone()))
    }

    pub fn j1_structure(&self) -> Arc<dyn AlmostComplexStructure> {
        Arc::new(J1Structure(self.clone()))
    }

    pub fn metric(&self) -> Arc<dyn MetricField> {
        Arc::new(GJ1Metric(self.clone()))
    }

    /// Seeded sample points with `θ ∈ [0, 2π)`, `p ∈ [−2, 2]^{2(n−1)}` and
    /// `ρ ∈ [−2, 1]`.
    pub fn sample_points(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.dim();
        (0..count)
            .map(|_| {
                let mut x = vec![0.0; m];
                x[0] = rng.gen_range(0.0..std::f64::consts::TAU);
                for v in &mut x[1..m - 1] {
                    *v = rng.gen_range(-2.0..2.0);
                }
                x[m - 1] = rng.gen_range(-2.0..1.0);
                x
            })
            .collect()
    }

    /// Checks `j₁² = −I`, `dβ∘(I × j₁) = g_{j₁}`, symmetry and positivity,
    /// and the value of `(dβ)^n`.
    pub fn verify(&self, points: &[Vec<f64>]) -> WReport {
        let m = self.dim();
        let mut rep = WReport {
            points: points.len(),
            max_j_square_defect: 0.0,
            max_metric_defect: 0.0,
            max_asymmetry: 0.0,
            min_metric_eigenvalue: f64::INFINITY,
            max_volume_defect: 0.0,
            min_volume: f64::INFINITY,
        };
        let mut factorial = 1.0;
        for k in 1..=self.n {
            factorial *= k as f64;
        }
        for x in points {
            let j = self.j1(x);
            let sq = &j * &j + DMatrix::identity(m, m);
            rep.max_j_square_defect = rep.max_j_square_defect.max(sq.amax());
            let db = self.d_beta(x);
            let g_closed = self.g_j1(x);
            let g = &db * &j;
            let scale = g_closed.amax().max(1.0);
            rep.max_metric_defect = rep
                .max_metric_defect
                .max(linalg::max_abs_diff(&g, &g_closed) / scale);
            rep.max_asymmetry = rep.max_asymmetry.max(linalg::symmetry_defect(&g) / scale);
            rep.min_metric_eigenvalue = rep
                .min_metric_eigenvalue
                .min(linalg::symmetric_eigen_range(&g_closed).0);
            let vol = two_form_power_volume(&db, self.n);
            let expect =
                2f64.powi(self.n as i32) * factorial * (-2.0 * self.n as f64 * x[m - 1]).exp();
            rep.max_volume_defect = rep.max_volume_defect.max((vol - expect).abs() / expect);
            rep.min_volume = rep.min_volume.min(vol);
        }
        rep
    }
}

impl WReport {
    pub fn passed(&self) -> bool {
        self.max_j_square_defect <= 1e-12
            && self.max_metric_defect <= 1e-9
            && self.max_asymmetry <= 1e-9
            && self.min_metric_eigenvalue > 0.0
            && self.max_volume_defect <= 1e-9
            && self.min_volume > 0.0
    }
}

/// Builds `W` and checks its identities at 100 seeded points.
pub fn build_w_structures(
    n: usize,
    j0: Option<DMatrix<f64>>,
    seed: u64,
) -> Result<(WSpace, WReport), KnotError> {
    let w = WSpace::new(n, j0)?;
    let rep = w.verify(&w.sample_points(seed, 100));
    if !rep.passed() {
        return Err(KnotError::Verification(format!(
            "W identities failed: {rep:?}"
        )));
    }
    Ok((w, rep))
}

#[derive(Debug, Clone)]
pub struct WBeta(pub WSpace);

impl OneForm for WBeta {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        self.0.beta_vec(x)
    }
    fn exterior_derivative(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.0.d_beta(x))
    }
}

#[derive(Debug, Clone)]
pub struct J1Structure(pub WSpace);

impl AlmostComplexStructure for J1Structure {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        self.0.j1(x)
    }
}

#[derive(Debug, Clone)]
pub struct GJ1Metric(pub WSpace);

impl MetricField for GJ1Metric {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.0.g_j1(x)
    }
}

/// `G(θ, p, ρ) = 2(F₁(ρ − log r₀, θ) + log r₀)` on `W`.
#[derive(Debug, Clone)]
pub struct PlaneProfileField {
    pub n: usize,
    pub r0: f64,
}

impl ScalarField for PlaneProfileField {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        plane_profile(x[0], x[2 * self.n - 1], self.r0)
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        let (g_theta, g_rho) = plane_profile_differential(x[0], x[2 * self.n - 1], self.r0);
        let mut d = DVector::zeros(2 * self.n);
        d[0] = g_theta;
        d[2 * self.n - 1] = g_rho;
        d
    }
}

/// The `g_{j₁}`-gradient of `G` in closed form:
/// `½G_ρ ∂_ρ + ½e^{2ρ}G_θ(e^{2ρ} + ½|p|²_{g₀}) ∂_θ − ½e^{2ρ}G_θ j₀p`.
pub fn grad_plane_profile(w: &WSpace, theta: f64, p: &[f64], rho: f64, r0: f64) -> DVector<f64> {
    let m = w.dim();
    let (g_theta, g_rho) = plane_profile_differential(theta, rho, r0);
    let pv = DVector::from_column_slice(p);
    let half_norm_sq = 0.5 * (pv.transpose() * w.g0() * &pv)[(0, 0)];
    let e2 = (2.0 * rho).exp();
    let mut v = DVector::zeros(m);
    v[0] = 0.5 * e2 * g_theta * (e2 + half_norm_sq);
    v.rows_mut(1, m - 2)
        .copy_from(&(w.j0() * &pv * (-0.5 * e2 * g_theta)));
    v[m - 1] = 0.5 * g_rho;
    v
}

/// `sqrt(g₀(p, p))`, conserved along the flow of `G` for constant `j₀`.
pub fn p_norm(w: &WSpace, p: &[f64]) -> f64 {
    let pv = DVector::from_column_slice(p);
    (pv.transpose() * w.g0() * &pv)[(0, 0)].max(0.0).sqrt()
}
