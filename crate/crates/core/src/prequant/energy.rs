use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::cylinder::{CylinderMap, LiftedCylinder};
use super::space::PrequantSpace;
use super::PrequantError;
use crate::diffgeo::two_form_at;
use crate::quadrature::{integrate_adaptive, LegendreRule};

const MAX_NODE_BREAKS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyQuality {
    /// `e^{f∘γ}` changed by less than `1e-6` (relative) over the last tenth
    /// of the `s` range.
    Converged,
    /// Still changing but finite; the value is a lower bound.
    Unconverged,
    /// `e^{f∘γ}` is not finite at the end of the range.
    Unbounded,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyFormula {
    pub value: f64,
    pub f_end: f64,
    pub relative_change: f64,
    pub quality: EnergyQuality,
}

/// `2π e^{f(γ(s_max))}`, the forward limit of `2π e^{f∘γ}` read at the end
/// of the cylinder.
pub fn hofer_energy_formula(space: &PrequantSpace, cyl: &LiftedCylinder) -> EnergyFormula {
    let (lo, hi) = cyl.s_range();
    let f_at = |s: f64| space.f().value(cyl.gamma(s).expect("inside").as_slice());
    let f_end = f_at(hi);
    let value = TAU * f_end.exp();
    if !value.is_finite() {
        return EnergyFormula {
            value: f64::INFINITY,
            f_end,
            relative_change: f64::INFINITY,
            quality: EnergyQuality::Unbounded,
        };
    }
    let earlier = TAU * f_at(hi - 0.1 * (hi - lo)).exp();
    let relative_change = (value - earlier).abs() / value;
    let quality = if relative_change < 1e-6 {
        EnergyQuality::Converged
    } else {
        EnergyQuality::Unconverged
    };
    EnergyFormula {
        value,
        f_end,
        relative_change,
        quality,
    }
}

/// `φ_k(a) = 1/(1 + e^{−k(a − a_mid)})` for each `k` in `steepness`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFamily {
    pub a_mid: f64,
    pub steepness: Vec<f64>,
}

impl SigmoidFamily {
    pub fn new(a_mid: f64) -> Self {
        Self {
            a_mid,
            steepness: vec![1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }

    pub fn value(&self, k: f64, a: f64) -> f64 {
        let x = k * (a - self.a_mid);
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn derivative(&self, k: f64, a: f64) -> f64 {
        let p = self.value(k, a);
        k * p * (1.0 - p)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub formula_value: f64,
    pub steepness: Vec<f64>,
    /// Boundary-term values `2π(φ(a(s₁))e^{f(s₁)} − φ(a(s₀))e^{f(s₀)})`.
    pub quadrature_values: Vec<f64>,
    /// Direct quadrature of `ũ*d(φλ_f)` over `[s₀, s₁] × S¹`.
    pub area_values: Vec<f64>,
    pub truncation: (f64, f64),
    pub supremum: f64,
    /// Largest relative disagreement between the two evaluations.
    pub stokes_defect: f64,
}

impl EnergyReport {
    pub fn relative_gap(&self) -> f64 {
        (self.formula_value - self.supremum).abs() / self.formula_value
    }
}

/// Evaluates the energy integrals for each member of the family both by the
/// boundary-term expression and by direct quadrature of the pulled-back
/// 2-form.
pub fn hofer_energy_quadrature(
    space: &PrequantSpace,
    cyl: &LiftedCylinder,
    family: &SigmoidFamily,
    s0: f64,
    s1: f64,
) -> Result<EnergyReport, PrequantError> {
    let (lo, hi) = cyl.s_range();
    if !(lo <= s0 && s0 < s1 && s1 <= hi) {
        return Err(PrequantError::Domain(format!(
            "truncation [{s0}, {s1}] not inside [{lo}, {hi}]"
        )));
    }
    if let Some(k) = family
        .steepness
        .iter()
        .find(|k| !(**k >= 0.0 && k.is_finite()))
    {
        return Err(PrequantError::Contract(format!(
            "steepness {k} gives a non-monotone cutoff"
        )));
    }
    let m = space.base_dim();
    let f_at = |s: f64| space.f().value(cyl.gamma(s).expect("inside").as_slice());
    let (a0, a1) = (cyl.a(s0).expect("inside"), cyl.a(s1).expect("inside"));
    let (e0, e1) = (f_at(s0).exp(), f_at(s1).exp());

    let lambda_f = space.lambda_f();
    let t_rule = LegendreRule::new(4);
    // s at which a crosses a_mid, where φ_k is steepest
    let mid_break = {
        let (mut l, mut h) = (s0, s1);
        if a0 < family.a_mid && a1 > family.a_mid {
            for _ in 0..200 {
                let c = 0.5 * (l + h);
                if cyl.a(c).expect("inside") < family.a_mid {
                    l = c;
                } else {
                    h = c;
                }
            }
            vec![0.5 * (l + h)]
        } else {
            Vec::new()
        }
    };

    // Integrator nodes (thinned) resolve the geometry of long cylinders, and
    // a geometric ladder around the sigmoid centre resolves φ_k′.
    let node_breaks: Vec<f64> = {
        let inside: Vec<f64> = cyl
            .nodes()
            .iter()
            .copied()
            .filter(|&x| x > s0 && x < s1)
            .collect();
        let stride = inside.len().div_ceil(MAX_NODE_BREAKS).max(1);
        inside.into_iter().step_by(stride).collect()
    };
    let ladder = |k: f64| -> Vec<f64> {
        let Some(&c) = mid_break.first() else {
            return Vec::new();
        };
        let rate = cyl.state_derivative(c).expect("inside")[m + 1]
            .abs()
            .max(1e-300);
        let width = 1.0 / (k * rate);
        let mut out = vec![c];
        let mut d = 0.25 * width;
        while d < s1 - s0 {
            out.push(c - d);
            out.push(c + d);
            d *= 2.0;
        }
        out
    };

    let mut quadrature_values = Vec::with_capacity(family.steepness.len());
    let mut area_values = Vec::with_capacity(family.steepness.len());
    let mut stokes_defect: f64 = 0.0;
    let mut failure = None;
    for &k in &family.steepness {
        let boundary = TAU * (family.value(k, a1) * e1 - family.value(k, a0) * e0);
        let integrand = |s: f64| -> f64 {
            let y = cyl.state(s).expect("inside");
            let dy = cyl.state_derivative(s).expect("inside");
            let a = y[m + 1];
            let a_s = dy[m + 1];
            let u_s = dy.rows(0, m + 1).into_owned();
            let (phi, dphi) = (family.value(k, a), family.derivative(k, a));
            t_rule.integrate(0.0, 1.0, |t| {
                let (_, u) = cyl.eval(s, t).expect("inside");
                let u_t = cyl.u_t(s, t).expect("inside");
                let lam = lambda_f.eval(u.as_slice());
                let dl = match two_form_at(lambda_f.as_ref(), u.as_slice()) {
                    Ok(d) => d,
                    Err(_) => return f64::NAN,
                };
                // (dφ ∧ λ_f + φ dλ_f)(ũ_s, ũ_t), with a_t = 0
                dphi * a_s * lam.dot(&u_t) + phi * u_s.dot(&(&dl * &u_t))
            })
        };
        let mut breaks = node_breaks.clone();
        breaks.extend(ladder(k));
        breaks.retain(|&x| x > s0 && x < s1);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let q = integrate_adaptive(integrand, s0, s1, &breaks, 1e-12, 1e-9, 20_000);
        if !q.value.is_finite() || !q.converged {
            failure = Some(format!(
                "area quadrature for k = {k} did not converge ({} intervals)",
                q.intervals
            ));
        }
        let scale = boundary.abs().max(q.value.abs()).max(1e-300);
        stokes_defect = stokes_defect.max((boundary - q.value).abs() / scale);
        quadrature_values.push(boundary);
        area_values.push(q.value);
    }
    if let Some(msg) = failure {
        return Err(PrequantError::Resolution(msg));
    }
    let formula_value = hofer_energy_formula(space, cyl).value;
    let supremum = quadrature_values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EnergyReport {
        formula_value,
        steepness: family.steepness.clone(),
        quadrature_values,
        area_values,
        truncation: (s0, s1),
        supremum,
        stokes_defect,
    })
}
