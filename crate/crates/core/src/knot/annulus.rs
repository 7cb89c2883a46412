use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{KnotError, KnotModel, TorusCoverage};
use crate::diffgeo::{ChartPoint, ConstantStructure, MetricField, ScalarField, StandardAlpha};
use crate::flow::{detect_omega_limit, integrate_flow, FlowOptions};
use crate::prequant::{build_cylinder, CylinderOptions, LiftedCylinder, PrequantSpace};
use crate::spiral::{annulus_map_p_inverse, AmbientAnnulusField, AnnulusParams, AnnulusProfile};

/// The annulus profile in the `(ρ, φ)` chart of `p`, or in the reflected
/// chart `σ = −ρ − 1` with the sign flipped, so that the backward flow
/// becomes a forward flow towards `σ = 0`.
#[derive(Debug, Clone, Default)]
pub struct AnnulusChartField {
    pub reflected: bool,
    profile: AnnulusProfile,
}

impl AnnulusChartField {
    pub fn new(reflected: bool) -> Self {
        Self {
            reflected,
            profile: AnnulusProfile::default(),
        }
    }
}

impl ScalarField for AnnulusChartField {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        if self.reflected {
            -self.profile.value(-x[0] - 1.0, x[1])
        } else {
            self.profile.value(x[0], x[1])
        }
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        let (a, b) = if self.reflected {
            let (g_rho, g_phi) = self.profile.differential(-x[0] - 1.0, x[1]);
            (g_rho, -g_phi)
        } else {
            self.profile.differential(x[0], x[1])
        };
        DVector::from_vec(vec![a, b])
    }
}

/// The Euclidean metric `2(dr² + r²dφ²)` of `(R², dα₁)` in the same charts:
/// `diag(2r²L², 2r²)` with `r = r₊e^{ρL}`, `L = log(r₊/r₋)`.
#[derive(Debug, Clone)]
pub struct AnnulusChartMetric {
    pub params: AnnulusParams,
    pub reflected: bool,
}

impl MetricField for AnnulusChartMetric {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let l = (self.params.r_plus / self.params.r_minus).ln();
        let rho = if self.reflected { -x[0] - 1.0 } else { x[0] };
        let r2 = (self.params.r_plus * (rho * l).exp()).powi(2);
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * r2 * l * l, 2.0 * r2]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnulusOptions {
    pub s_range: (f64, f64),
    pub cylinder: CylinderOptions,
    pub flow: FlowOptions,
    pub band: f64,
    pub bins: usize,
}

impl Default for AnnulusOptions {
    fn default() -> Self {
        Self {
            s_range: (-20.0, 20.0),
            cylinder: CylinderOptions::default(),
            flow: FlowOptions::default(),
            band: 0.05,
            bins: 36,
        }
    }
}

pub struct AnnulusCylinder {
    pub params: AnnulusParams,
    pub start: Vec<f64>,
    pub space: PrequantSpace,
    pub cylinder: LiftedCylinder,
    /// Coverage of `S¹ × {p} × {|z| = r₊}`.
    pub forward: TorusCoverage,
    /// Coverage of `S¹ × {p} × {|z| = r₋}`.
    pub backward: TorusCoverage,
    /// Largest change of the first `2(n−1)` coordinates along the cylinder.
    pub transverse_drift: f64,
}

/// `PrequantSpace` over `(R^{2n}, α_n)` with `f` the ambient annulus field
/// and the split structure `J₀`.
pub fn annulus_space(model: &KnotModel, params: AnnulusParams) -> Result<PrequantSpace, KnotError> {
    let n = model.n();
    let j: Arc<ConstantStructure> = Arc::new(ConstantStructure(model.j0_block()));
    Ok(PrequantSpace::new(
        Arc::new(StandardAlpha::on_plane_pairs(n)),
        j,
        Arc::new(AmbientAnnulusField { n, params }),
    )?)
}

/// Lifts the flow line of the ambient annulus field through `start ∈ R^{2n}`
/// and measures both limit tori with the unit-speed flow in the `(ρ, φ)`
/// charts.
pub fn build_annulus_cylinder(
    model: &KnotModel,
    params: AnnulusParams,
    start: &[f64],
    opts: &AnnulusOptions,
) -> Result<AnnulusCylinder, KnotError> {
    let n = model.n();
    if start.len() != 2 * n {
        return Err(KnotError::Contract(format!(
            "start must lie in R^{}",
            2 * n
        )));
    }
    let (xn, yn) = (start[2 * n - 2], start[2 * n - 1]);
    let r = xn.hypot(yn);
    if !(r > params.r_minus && r < params.r_plus) {
        return Err(KnotError::Domain(format!(
            "start radius {r} is not strictly between r_minus = {} and r_plus = {}: the orbit is stationary or leaves the annulus",
            params.r_minus, params.r_plus
        )));
    }
    let space = annulus_space(model, params)?;
    let cylinder = build_cylinder(&space, start, opts.s_range, &opts.cylinder)?;

    let mut transverse_drift: f64 = 0.0;
    for g in cylinder.gamma_nodes() {
        for i in 0..2 * n - 2 {
            transverse_drift = transverse_drift.max((g[i] - start[i]).abs());
        }
    }

    let (rho, phi) = annulus_map_p_inverse(xn, yn, &params)?;
    let run = |reflected: bool| -> Result<TorusCoverage, KnotError> {
        let s0 = if reflected { -rho - 1.0 } else { rho };
        let flow_opts = FlowOptions {
            s_index: 0,
            angle_index: Some(1),
            backward: false,
            ..opts.flow
        };
        let traj = integrate_flow(
            &AnnulusChartField::new(reflected),
            &AnnulusChartMetric { params, reflected },
            &ChartPoint::new(vec![s0, phi], vec![1]),
            &flow_opts,
        )?;
        Ok(TorusCoverage::from_limit(&detect_omega_limit(
            &traj, opts.band, opts.bins,
        )?))
    };
    let forward = run(false)?;
    let backward = run(true)?;
    Ok(AnnulusCylinder {
        params,
        start: start.to_vec(),
        space,
        cylinder,
        forward,
        backward,
        transverse_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::riemannian_gradient;
    use crate::spiral::annulus_map_p;

    #[test]
    fn chart_gradient_matches_ambient_gradient() {
        let params = AnnulusParams::new(1.0, 2.0).unwrap();
        let f = AmbientAnnulusField { n: 1, params };
        let g = crate::diffgeo::ConstantMetric(DMatrix::identity(2, 2) * 2.0);
        let l = 2f64.ln();
        for &(rho, phi) in &[(-0.5, 0.3), (-0.1, 2.0), (-0.9, 4.0), (-0.03, 1.0)] {
            let (x, y) = annulus_map_p(rho, phi, &params);
            let amb = riemannian_gradient(&f, &g, &[x, y]).unwrap();
            let ch = riemannian_gradient(
                &AnnulusChartField::new(false),
                &AnnulusChartMetric {
                    params,
                    reflected: false,
                },
                &[rho, phi],
            )
            .unwrap();
            // push the chart vector forward through p
            let r = x.hypot(y);
            let push = [
                ch[0] * r * l * phi.cos() - ch[1] * r * phi.sin(),
                ch[0] * r * l * phi.sin() + ch[1] * r * phi.cos(),
            ];
            assert!((amb[0] - push[0]).abs() < 1e-12 && (amb[1] - push[1]).abs() < 1e-12);
            // the reflected chart is the negative flow
            let sigma = -rho - 1.0;
            let rf = riemannian_gradient(
                &AnnulusChartField::new(true),
                &AnnulusChartMetric {
                    params,
                    reflected: true,
                },
                &[sigma, phi],
            )
            .unwrap();
            assert!((rf[0] - ch[0]).abs() < 1e-12 && (rf[1] + ch[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn start_outside_the_annulus_is_rejected() {
        let model = KnotModel::standard(1).unwrap();
        let params = AnnulusParams::new(1.0, 2.0).unwrap();
        for start in [[2.0, 0.0], [0.5, 0.0], [0.0, 0.0]] {
            assert!(matches!(
                build_annulus_cylinder(&model, params, &start, &AnnulusOptions::default()),
                Err(KnotError::Domain(_))
            ));
        }
    }
}
