use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::wspace::WSpace;
use super::KnotError;
use crate::diffgeo::{
    contact_volume, AlmostComplexStructure, OneForm, PrequantForm, StandardAlpha,
};
use crate::linalg;

/// The standard model `(S¹ × R^{2n}, λ₀ = dθ + α_n)` with the block
/// structure `J₀ = j₀ ⊕ i` on `R^{2(n−1)} ⊕ R²`.
#[derive(Debug, Clone)]
pub struct KnotModel {
    w: WSpace,
}

impl KnotModel {
    pub fn new(w: WSpace) -> Self {
        Self { w }
    }

    pub fn standard(n: usize) -> Result<Self, KnotError> {
        Ok(Self::new(WSpace::new(n, None)?))
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    pub fn w(&self) -> &WSpace {
        &self.w
    }

    pub fn dim(&self) -> usize {
        2 * self.n() + 1
    }

    pub fn lambda0(&self) -> Arc<dyn OneForm> {
        Arc::new(PrequantForm::new(Arc::new(StandardAlpha::on_plane_pairs(
            self.n(),
        ))))
    }

    /// `J₀` on `R^{2n}`.
    pub fn j0_block(&self) -> DMatrix<f64> {
        let m = 2 * self.n();
        let mut j = DMatrix::zeros(m, m);
        j.view_mut((0, 0), (m - 2, m - 2)).copy_from(self.w.j0());
        j[(m - 1, m - 2)] = 1.0;
        j[(m - 2, m - 1)] = -1.0;
        j
    }

    /// Relative deviation of `λ₀ ∧ (dλ₀)^n` from `2ⁿ n!` at `points`.
    pub fn volume_defect(&self, points: &[Vec<f64>]) -> Result<f64, KnotError> {
        let n = self.n();
        let expect = 2f64.powi(n as i32) * (1..=n).product::<usize>() as f64;
        let lam = self.lambda0();
        let mut worst: f64 = 0.0;
        for x in points {
            let v = contact_volume(lam.as_ref(), x, n)?;
            worst = worst.max((v - expect).abs() / expect);
        }
        Ok(worst)
    }

    pub fn extended_j(&self) -> ExtendedJ {
        ExtendedJ {
            j0: self.j0_block(),
            flip_last: false,
        }
    }
}

/// `Φ(φ, θ, p, ρ) = (θ, p, e^ρ cos φ, e^ρ sin φ)` from `S¹ × W` to
/// `S¹ × R^{2(n−1)} × (R² \ 0)`.
#[derive(Debug, Clone, Copy)]
pub struct PhiMap {
    pub n: usize,
}

impl PhiMap {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn forward(&self, x: &[f64]) -> DVector<f64> {
        let m = self.dim();
        let (phi, rho) = (x[0], x[m - 1]);
        let mut y = DVector::zeros(m);
        for i in 0..m - 2 {
            y[i] = x[i + 1];
        }
        let r = rho.exp();
        y[m - 2] = r * phi.cos();
        y[m - 1] = r * phi.sin();
        y
    }

    /// Defined off the locus `x_n = y_n = 0`; φ is returned in `(−π, π]`.
    pub fn inverse(&self, y: &[f64]) -> Result<DVector<f64>, KnotError> {
        let m = self.dim();
        let (xn, yn) = (y[m - 2], y[m - 1]);
        let r2 = xn * xn + yn * yn;
        if r2 == 0.0 {
            return Err(KnotError::Domain(
                "Φ⁻¹ is undefined on x_n = y_n = 0".into(),
            ));
        }
        let mut x = DVector::zeros(m);
        x[0] = yn.atan2(xn);
        for i in 0..m - 2 {
            x[i + 1] = y[i];
        }
        x[m - 1] = 0.5 * r2.ln();
        Ok(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.dim();
        let (phi, rho) = (x[0], x[m - 1]);
        let r = rho.exp();
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m - 2 {
            d[(i, i + 1)] = 1.0;
        }
        d[(m - 2, 0)] = -r * phi.sin();
        d[(m - 2, m - 1)] = r * phi.cos();
        d[(m - 1, 0)] = r * phi.cos();
        d[(m - 1, m - 1)] = r * phi.sin();
        d
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PullbackResidual {
    /// `|Φ*λ₀ − e^{2ρ}(dφ + β)|_∞`.
    pub lambda: f64,
    /// `|Φ*(x_n dy_n − y_n dx_n) − e^{2ρ}dφ|_∞`.
    pub angular: f64,
    /// `|Φ*(x_n dx_n + y_n dy_n) − e^{2ρ}dρ|_∞`.
    pub radial: f64,
}

impl PullbackResidual {
    pub fn max(&self) -> f64 {
        self.lambda.max(self.angular).max(self.radial)
    }
}

/// Compares the pullbacks through `DΦᵀ` with their closed forms at a point
/// `(φ, θ, p, ρ)` of `S¹ × W`. Differences are relative to `e^{2ρ}`.
pub fn phi_pullback_check(w: &WSpace, x: &[f64]) -> PullbackResidual {
    let n = w.n();
    let phi_map = PhiMap { n };
    let m = phi_map.dim();
    let y = phi_map.forward(x);
    let jac = phi_map.jacobian(x);
    let lam0 = PrequantForm::new(Arc::new(StandardAlpha::on_plane_pairs(n))).eval(y.as_slice());
    let pulled = jac.transpose() * lam0;
    let e2 = (2.0 * x[m - 1]).exp();
    let mut expect = DVector::zeros(m);
    expect[0] = 1.0;
    expect.rows_mut(1, m - 1).copy_from(&w.beta_vec(&x[1..]));
    expect *= e2;

    let (xn, yn) = (y[m - 2], y[m - 1]);
    let mut ang = DVector::zeros(m);
    ang[m - 2] = -yn;
    ang[m - 1] = xn;
    let mut rad = DVector::zeros(m);
    rad[m - 2] = xn;
    rad[m - 1] = yn;
    let mut e_phi = DVector::zeros(m);
    e_phi[0] = e2;
    let mut e_rho = DVector::zeros(m);
    e_rho[m - 1] = e2;
    let scale = e2.max(1.0);
    PullbackResidual {
        lambda: (pulled - expect).amax() / scale,
        angular: (jac.transpose() * ang - e_phi).amax() / scale,
        radial: (jac.transpose() * rad - e_rho).amax() / scale,
    }
}

/// `M = [[0, −α_n(q)ᵀJ₀], [0, J₀]]` on `S¹ × R^{2n}`: the smooth extension
/// of `Φ_* j̃₁` across `x_n = y_n = 0`. On the sections
/// `e_k = −α_n(∂_k)∂_θ + ∂_k` spanning ξ₀ it acts as `e_k ↦ e_{J₀∂_k}`.
/// With `flip_last` the last block of `J₀` is negated.
#[derive(Debug, Clone)]
pub struct ExtendedJ {
    pub j0: DMatrix<f64>,
    pub flip_last: bool,
}

impl ExtendedJ {
    pub fn negated_last_block(mut self) -> Self {
        self.flip_last = !self.flip_last;
        self
    }
}

impl AlmostComplexStructure for ExtendedJ {
    fn dim(&self) -> usize {
        self.j0.nrows() + 1
    }
    fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.j0.nrows();
        let mut j0 = self.j0.clone();
        if self.flip_last {
            let mut block = j0.view_mut((m - 2, m - 2), (2, 2));
            block *= -1.0;
        }
        let a = StandardAlpha::on_plane_pairs(m / 2).eval(&x[1..]);
        let mut out = DMatrix::zeros(m + 1, m + 1);
        let top = -(a.transpose() * &j0);
        out.view_mut((0, 1), (1, m)).copy_from(&top);
        out.view_mut((1, 1), (m, m)).copy_from(&j0);
        out
    }
}

/// Basis `e_k = −α_n(∂_k)∂_θ + ∂_k` of ξ₀ at `y`, as columns.
pub fn xi0_frame(n: usize, y: &[f64]) -> DMatrix<f64> {
    let m = 2 * n;
    let a = StandardAlpha::on_plane_pairs(n).eval(&y[1..]);
    let mut e = DMatrix::zeros(m + 1, m);
    for k in 0..m {
        e[(0, k)] = -a[k];
        e[(k + 1, k)] = 1.0;
    }
    e
}

/// `j̃₁ = [[0, −β(x)ᵀ j₁], [0, j₁]]` at a point `(φ, w)` of `S¹ × W`.
pub fn lifted_j1(w: &WSpace, x: &[f64]) -> DMatrix<f64> {
    let m = w.dim();
    let j1 = w.j1(&x[1..]);
    let b = w.beta_vec(&x[1..]);
    let mut out = DMatrix::zeros(m + 1, m + 1);
    out.view_mut((0, 1), (1, m))
        .copy_from(&(-(b.transpose() * &j1)));
    out.view_mut((1, 1), (m, m)).copy_from(&j1);
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExtendedJReport {
    pub points: usize,
    /// `|M e_k − DΦ j̃₁ DΦ⁻¹ e_k|` off the locus.
    pub max_conjugation_defect: f64,
    /// `|M² e_k + e_k|` including points on the locus.
    pub max_square_defect: f64,
    /// `|dλ₀(e, Me') + dλ₀(Me, e')|` symmetry defect of the induced metric.
    pub max_compatibility_defect: f64,
    pub min_metric_eigenvalue: f64,
    pub all_finite: bool,
}

impl ExtendedJReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.all_finite
            && self.max_conjugation_defect <= tol
            && self.max_square_defect <= tol
            && self.max_compatibility_defect <= tol
            && self.min_metric_eigenvalue > 0.0
    }
}

/// Compares `extended_J` with the conjugated `j̃₁` at points `(φ, w)` off the
/// locus and checks `J² = −I` and compatibility on ξ₀ at the pushed points
/// and on `locus` points of `S¹ × R^{2n}`.
pub fn check_extended_j(
    model: &KnotModel,
    off_locus: &[Vec<f64>],
    locus: &[Vec<f64>],
) -> Result<ExtendedJReport, KnotError> {
    let n = model.n();
    let phi = PhiMap { n };
    let ext = model.extended_j();
    let lam0 = model.lambda0();
    let mut rep = ExtendedJReport {
        points: off_locus.len() + locus.len(),
        max_conjugation_defect: 0.0,
        max_square_defect: 0.0,
        max_compatibility_defect: 0.0,
        min_metric_eigenvalue: f64::INFINITY,
        all_finite: true,
    };
    let check_on_xi = |y: &[f64], rep: &mut ExtendedJReport| -> Result<(), KnotError> {
        let jm = ext.matrix(y);
        rep.all_finite &= jm.iter().all(|v| v.is_finite());
        let e = xi0_frame(n, y);
        let je = &jm * &e;
        rep.max_square_defect = rep.max_square_defect.max((&jm * &je + &e).amax());
        let dl = crate::diffgeo::two_form_at(lam0.as_ref(), y)?;
        let g = e.transpose() * dl * je;
        rep.max_compatibility_defect = rep
            .max_compatibility_defect
            .max(linalg::symmetry_defect(&g));
        rep.min_metric_eigenvalue = rep
            .min_metric_eigenvalue
            .min(linalg::symmetric_eigen_range(&g).0);
        Ok(())
    };
    for x in off_locus {
        let y = phi.forward(x);
        let d = phi.jacobian(x);
        let d_inv = linalg::inverse(&d)
            .ok_or_else(|| KnotError::Domain(format!("DΦ singular at {x:?}")))?;
        let conj = &d * lifted_j1(model.w(), x) * d_inv;
        let e = xi0_frame(n, y.as_slice());
        let diff = (ext.matrix(y.as_slice()) * &e - conj * &e).amax();
        let scale = e.amax().max(1.0);
        rep.max_conjugation_defect = rep.max_conjugation_defect.max(diff / scale);
        check_on_xi(y.as_slice(), &mut rep)?;
    }
    for y in locus {
        check_on_xi(y, &mut rep)?;
    }
    Ok(rep)
}
