//! The spiralling potentials: the cutoff η, `G`, `F_δ`, the annulus and
//! plane profiles built from them, and scalar-field adapters for the flow
//! engine.

mod cutoff;
mod potential;
mod profiles;

use std::sync::Arc;

use nalgebra::DVector;

use crate::diffgeo::ScalarField;

pub use cutoff::BumpStep;
pub use potential::{
    critical_bound, critical_bound_scaled, d_f_delta, eta_derivative, eval_eta, eval_f_delta,
    eval_g, eval_g_with, grad_g, grad_g_with, SpiralParams, DEFAULT_C,
};
pub use profiles::{
    ambient_f, ambient_f_with_differential, annulus_map_p, annulus_map_p_inverse, annulus_profile,
    plane_profile, plane_profile_differential, two_sided_profile, AnnulusParams, AnnulusProfile,
    PlaneParams,
};

/// `F_δ` as a scalar field on the `(s, t)` chart.
#[derive(Debug, Clone)]
pub struct FDeltaField(pub SpiralParams);

impl ScalarField for FDeltaField {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        eval_f_delta(x[0], x[1], &self.0)
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        let (fs, ft) = d_f_delta(x[0], x[1], &self.0);
        DVector::from_vec(vec![fs, ft])
    }
}

/// The annulus profile pulled back to `R^{2n}` (see [`ambient_f`]).
#[derive(Debug, Clone)]
pub struct AmbientAnnulusField {
    pub n: usize,
    pub params: AnnulusParams,
}

impl ScalarField for AmbientAnnulusField {
    fn dim(&self) -> usize {
        2 * self.n
    }
    fn value(&self, x: &[f64]) -> f64 {
        ambient_f(x, &self.params)
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(ambient_f_with_differential(x, &self.params).1)
    }
}

pub fn f_delta_field(delta: f64) -> Arc<dyn ScalarField> {
    Arc::new(FDeltaField(SpiralParams::new(delta)))
}

/// Golden-section search for the minimum of a unimodal function on
/// `[a, b]`; returns `(argmin, min)`.
pub fn golden_section_minimize(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// `(9/4) t e^t + 1`, whose positivity on `t ≤ 0` bounds `G` from below.
pub fn te_lower_bound(t: f64) -> f64 {
    2.25 * t * t.exp() + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn te_lower_bound_minimum() {
        let (t, v) = golden_section_minimize(te_lower_bound, -10.0, 0.0, 1e-10);
        assert!((t + 1.0).abs() < 1e-6);
        assert!((v - (1.0 - 9.0 / (4.0 * E))).abs() < 1e-12);
        assert!(v > 0.17);
    }

    #[test]
    fn ambient_field_is_constant_off_last_pair() {
        let f = AmbientAnnulusField {
            n: 2,
            params: AnnulusParams::new(1.0, 2.0).unwrap(),
        };
        let d = f.differential(&[3.0, -1.0, 1.2, 0.4]);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[1], 0.0);
    }
}
