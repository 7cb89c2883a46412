use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::potential::{d_f_delta, eval_f_delta, SpiralParams};
use crate::diffgeo::{canonical_angle, GeometryError};

/// Radii of the annulus whose boundary circles become the two limit tori.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusParams {
    pub r_minus: f64,
    pub r_plus: f64,
}

impl AnnulusParams {
    pub fn new(r_minus: f64, r_plus: f64) -> Result<Self, GeometryError> {
        if !(r_minus > 0.0 && r_plus > r_minus) {
            return Err(GeometryError::Degenerate(format!(
                "annulus radii must satisfy r_plus > r_minus > 0, got ({r_minus}, {r_plus})"
            )));
        }
        Ok(Self { r_minus, r_plus })
    }

    fn log_ratio(&self) -> f64 {
        (self.r_plus / self.r_minus).ln()
    }
}

/// Parameters of the plane construction: limit radius `r0` and the
/// half-dimension `n` of the ambient `R^{2n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneParams {
    pub r0: f64,
    pub n: usize,
}

impl PlaneParams {
    pub fn new(r0: f64, n: usize) -> Result<Self, GeometryError> {
        if !(r0 > 0.0) || n == 0 {
            return Err(GeometryError::Degenerate(format!(
                "need r0 > 0 and n >= 1, got ({r0}, {n})"
            )));
        }
        Ok(Self { r0, n })
    }
}

fn quarter() -> SpiralParams {
    SpiralParams::new(0.25)
}

/// Two-ended profile on the cylinder: `F_{1/4}(ρ, φ)` for `ρ > -3/4`,
/// `-F_{1/4}(-ρ-1, φ) - 1` otherwise. The branches agree (both equal ρ)
/// on `[-3/4, -1/4]`.
#[derive(Debug, Clone)]
pub struct AnnulusProfile {
    f: SpiralParams,
}

impl Default for AnnulusProfile {
    fn default() -> Self {
        Self { f: quarter() }
    }
}

impl AnnulusProfile {
    pub fn value(&self, rho: f64, phi: f64) -> f64 {
        if rho > -0.75 {
            eval_f_delta(rho, phi, &self.f)
        } else {
            -eval_f_delta(-rho - 1.0, phi, &self.f) - 1.0
        }
    }

    /// `(∂_ρ, ∂_φ)` of the profile.
    pub fn differential(&self, rho: f64, phi: f64) -> (f64, f64) {
        if rho > -0.75 {
            d_f_delta(rho, phi, &self.f)
        } else {
            let (fs, ft) = d_f_delta(-rho - 1.0, phi, &self.f);
            (fs, -ft)
        }
    }

    /// Both branch values, for checking that they agree on the overlap.
    pub fn branches(&self, rho: f64, phi: f64) -> (f64, f64) {
        (
            eval_f_delta(rho, phi, &self.f),
            -eval_f_delta(-rho - 1.0, phi, &self.f) - 1.0,
        )
    }
}

pub fn annulus_profile(rho: f64, phi: f64) -> f64 {
    AnnulusProfile::default().value(rho, phi)
}

/// `p(ρ, φ) = r₊ (r₊/r₋)^ρ (cos φ, sin φ)`.
pub fn annulus_map_p(rho: f64, phi: f64, params: &AnnulusParams) -> (f64, f64) {
    let r = params.r_plus * (rho * params.log_ratio()).exp();
    (r * phi.cos(), r * phi.sin())
}

/// Inverse of [`annulus_map_p`], with φ in `[0, 2π)`.
pub fn annulus_map_p_inverse(
    x: f64,
    y: f64,
    params: &AnnulusParams,
) -> Result<(f64, f64), GeometryError> {
    let r = x.hypot(y);
    if r == 0.0 {
        return Err(GeometryError::EvaluationDomain(
            "p is not onto the origin".into(),
        ));
    }
    let rho = (r / params.r_plus).ln() / params.log_ratio();
    Ok((rho, canonical_angle(y.atan2(x))))
}

/// The annulus profile pulled back to `R^{2n}` through the last coordinate
/// pair; `-1` on the axis `(x_n, y_n) = 0`.
pub fn ambient_f(x: &[f64], params: &AnnulusParams) -> f64 {
    ambient_f_with_differential(x, params).0
}

pub fn ambient_f_with_differential(x: &[f64], params: &AnnulusParams) -> (f64, Vec<f64>) {
    let m = x.len();
    assert!(m >= 2 && m % 2 == 0, "ambient space must be R^(2n)");
    let (xn, yn) = (x[m - 2], x[m - 1]);
    let mut d = vec![0.0; m];
    let r2 = xn * xn + yn * yn;
    if r2 == 0.0 || r2.sqrt() <= params.r_minus {
        return (-1.0, d);
    }
    let profile = AnnulusProfile::default();
    let (rho, phi) = annulus_map_p_inverse(xn, yn, params).expect("off the axis");
    let (g_rho, g_phi) = profile.differential(rho, phi);
    let l = params.log_ratio();
    // dρ = (x dx + y dy)/(r² L), dφ = (x dy − y dx)/r²
    d[m - 2] = g_rho * xn / (r2 * l) - g_phi * yn / r2;
    d[m - 1] = g_rho * yn / (r2 * l) + g_phi * xn / r2;
    (profile.value(rho, phi), d)
}

/// `G(θ, p, ρ) = 2(F₁(ρ - log r₀, θ) + log r₀)`; independent of `p`.
pub fn plane_profile(theta: f64, rho: f64, r0: f64) -> f64 {
    let lr = r0.ln();
    2.0 * (eval_f_delta(rho - lr, theta, &SpiralParams::new(1.0)) + lr)
}

/// `(G_θ, G_ρ)` of [`plane_profile`].
pub fn plane_profile_differential(theta: f64, rho: f64, r0: f64) -> (f64, f64) {
    let (fs, ft) = d_f_delta(rho - r0.ln(), theta, &SpiralParams::new(1.0));
    (2.0 * ft, 2.0 * fs)
}

/// `F_{ε/2}(s, t) + F_{ε/2}(-s, t + π)`: equals `-|s|` for `ε/2 < |s| < ε`.
pub fn two_sided_profile(s: f64, t: f64, eps: f64) -> f64 {
    let p = SpiralParams::new(0.5 * eps);
    eval_f_delta(s, t, &p) + eval_f_delta(-s, t + PI, &p)
}
