use std::f64::consts::TAU;
use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::space::PrequantSpace;
use super::PrequantError;
use crate::flow::dense::HermiteCurve;
use crate::flow::ode::{integrate, Method, OdeOptions, OdeSolution, RhsError};

/// A map `ũ = (a, u)` from a cylinder `[s₀, s₁] × R/Z` into `R × M`.
pub trait CylinderMap: Send + Sync {
    /// Dimension of `M`.
    fn target_dim(&self) -> usize;
    fn s_range(&self) -> (f64, f64);
    /// `(a(s, t), u(s, t))`; `None` outside the domain.
    fn eval(&self, s: f64, t: f64) -> Option<(f64, DVector<f64>)>;
    /// `u_t(s, t)`. The default is a central difference.
    fn u_t(&self, s: f64, t: f64) -> Option<DVector<f64>> {
        let h = 1e-5;
        let (_, p) = self.eval(s, t + h)?;
        let (_, m) = self.eval(s, t - h)?;
        Some((p - m) / (2.0 * h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Fiber angle `θ(0)`.
    pub theta0: f64,
    /// `a(0)`.
    pub a0: f64,
}

impl Default for CylinderOptions {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            theta0: 0.0,
            a0: 0.0,
        }
    }
}

/// `ũ(s, t) = (a(s), θ(s) + 2πt, γ(s))` from an integrated lift system,
/// interpolated in `s` by quintic Hermite data on the state `(θ, γ, a)`.
#[derive(Debug, Clone)]
pub struct LiftedCylinder {
    base_dim: usize,
    curve: HermiteCurve,
}

impl LiftedCylinder {
    pub fn from_curve(base_dim: usize, curve: HermiteCurve) -> Self {
        assert_eq!(curve.node_values()[0].len(), base_dim + 2);
        Self { base_dim, curve }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn curve(&self) -> &HermiteCurve {
        &self.curve
    }

    pub fn nodes(&self) -> &[f64] {
        self.curve.nodes()
    }

    /// State `(θ, γ, a)` at `s`.
    pub fn state(&self, s: f64) -> Option<DVector<f64>> {
        self.curve.eval(s)
    }

    pub fn state_derivative(&self, s: f64) -> Option<DVector<f64>> {
        self.curve.eval_derivative(s)
    }

    pub fn a(&self, s: f64) -> Option<f64> {
        self.state(s).map(|y| y[self.base_dim + 1])
    }

    pub fn theta(&self, s: f64) -> Option<f64> {
        self.state(s).map(|y| y[0])
    }

    pub fn gamma(&self, s: f64) -> Option<DVector<f64>> {
        self.state(s).map(|y| y.rows(1, self.base_dim).into_owned())
    }

    /// Node values of `a`.
    pub fn a_nodes(&self) -> Vec<f64> {
        self.curve
            .node_values()
            .iter()
            .map(|y| y[self.base_dim + 1])
            .collect()
    }

    /// Node values of `γ`.
    pub fn gamma_nodes(&self) -> Vec<DVector<f64>> {
        self.curve
            .node_values()
            .iter()
            .map(|y| y.rows(1, self.base_dim).into_owned())
            .collect()
    }

    /// Smallest `ȧ` over the nodes; positive for every lifted cylinder.
    pub fn min_a_rate(&self) -> f64 {
        let k = self.base_dim + 1;
        self.curve
            .node_derivatives()
            .iter()
            .map(|d| d[k])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest drop of `ȧ` between consecutive nodes, relative to `ȧ`;
    /// nonpositive (up to rounding) when `a` is convex.
    pub fn max_a_rate_drop(&self) -> f64 {
        let k = self.base_dim + 1;
        self.curve
            .node_derivatives()
            .windows(2)
            .map(|w| (w[0][k] - w[1][k]) / w[0][k].abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One row per node: `s, a, theta_lift, gamma_0, ...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,a,theta_lift");
        for i in 0..self.base_dim {
            let _ = write!(out, ",gamma_{i}");
        }
        out.push('\n');
        for (s, y) in self.curve.nodes().iter().zip(self.curve.node_values()) {
            let _ = write!(out, "{s:.17e},{:.17e},{:.17e}", y[self.base_dim + 1], y[0]);
            for i in 0..self.base_dim {
                let _ = write!(out, ",{:.17e}", y[1 + i]);
            }
            out.push('\n');
        }
        out
    }
}

impl CylinderMap for LiftedCylinder {
    fn target_dim(&self) -> usize {
        self.base_dim + 1
    }
    fn s_range(&self) -> (f64, f64) {
        self.curve.domain()
    }
    fn eval(&self, s: f64, t: f64) -> Option<(f64, DVector<f64>)> {
        let y = self.state(s)?;
        let mut u = y.rows(0, self.base_dim + 1).into_owned();
        u[0] += TAU * t;
        Some((y[self.base_dim + 1], u))
    }
    fn u_t(&self, s: f64, _t: f64) -> Option<DVector<f64>> {
        let (lo, hi) = self.s_range();
        if !(s >= lo && s <= hi) {
            return None;
        }
        let mut v = DVector::zeros(self.base_dim + 1);
        v[0] = TAU;
        Some(v)
    }
}

/// `(a, θ + 2πt + ε sin 2πt, γ)`: a lifted cylinder with a fiber
/// perturbation that breaks `u*λ∘j = da`.
pub struct FiberPerturbation<'a> {
    pub inner: &'a LiftedCylinder,
    pub amplitude: f64,
}

impl CylinderMap for FiberPerturbation<'_> {
    fn target_dim(&self) -> usize {
        self.inner.target_dim()
    }
    fn s_range(&self) -> (f64, f64) {
        self.inner.s_range()
    }
    fn eval(&self, s: f64, t: f64) -> Option<(f64, DVector<f64>)> {
        let (a, mut u) = self.inner.eval(s, t)?;
        u[0] += self.amplitude * (TAU * t).sin();
        Some((a, u))
    }
}

fn solve_leg(
    space: &PrequantSpace,
    y0: &DVector<f64>,
    s_end: f64,
    opts: &CylinderOptions,
) -> Result<(OdeSolution, Option<HermiteCurve>), (crate::flow::ode::OdeError, OdeSolution)> {
    let mut rhs = |s: f64, y: &DVector<f64>| {
        space.lift_ode_rhs(y.as_slice()).map_err(|e| RhsError {
            t: s,
            message: e.to_string(),
        })
    };
    let ode = OdeOptions {
        method: opts.method,
        rtol: opts.rtol,
        atol: opts.atol,
        h0: None,
        h_max: opts.h_max,
        max_steps: opts.max_steps,
    };
    match integrate(&mut rhs, 0.0, y0.clone(), s_end, &ode, &mut |_, _| false) {
        Ok(sol) => {
            let curve = if sol.t.len() >= 2 {
                HermiteCurve::from_solution(&sol, &mut rhs).ok()
            } else {
                None
            };
            Ok((sol, curve))
        }
        Err(fail) => Err((fail.error, fail.partial)),
    }
}

/// Integrates the lift system from `γ(0) = x0` over `s_range` (which must
/// contain 0) and returns the cylinder.
pub fn build_cylinder(
    space: &PrequantSpace,
    x0: &[f64],
    s_range: (f64, f64),
    opts: &CylinderOptions,
) -> Result<LiftedCylinder, PrequantError> {
    let m = space.base_dim();
    if x0.len() != m {
        return Err(PrequantError::Contract(format!(
            "start point must have dimension {m}"
        )));
    }
    let (lo, hi) = s_range;
    if !(lo <= 0.0 && hi >= 0.0 && hi > lo) {
        return Err(PrequantError::Domain(format!(
            "s range {s_range:?} must contain 0 and be nondegenerate"
        )));
    }
    let mut y0 = DVector::zeros(m + 2);
    y0[0] = opts.theta0;
    y0.rows_mut(1, m).copy_from_slice(x0);
    y0[m + 1] = opts.a0;

    let partial_of = |sol: &OdeSolution| -> Option<Box<LiftedCylinder>> {
        if sol.t.len() < 2 {
            return None;
        }
        let mut rhs = |s: f64, y: &DVector<f64>| {
            space.lift_ode_rhs(y.as_slice()).map_err(|e| RhsError {
                t: s,
                message: e.to_string(),
            })
        };
        HermiteCurve::from_solution(sol, &mut rhs)
            .ok()
            .map(|c| Box::new(LiftedCylinder::from_curve(m, c)))
    };

    let mut pieces = Vec::new();
    for end in [lo, hi] {
        if end == 0.0 {
            continue;
        }
        match solve_leg(space, &y0, end, opts) {
            Ok((_, Some(curve))) => pieces.push(curve),
            Ok((_, None)) => {
                return Err(PrequantError::Evaluation(
                    "integration produced a single node".into(),
                ))
            }
            Err((source, partial)) => {
                return Err(PrequantError::Integration {
                    source,
                    partial: partial_of(&partial),
                });
            }
        }
    }
    let curve = match pieces.len() {
        1 => pieces.pop().expect("one piece"),
        _ => HermiteCurve::join(&pieces[0], &pieces[1]),
    };
    Ok(LiftedCylinder::from_curve(m, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::{ConstantStructure, ScalarFn, StandardAlpha};
    use crate::prequant::models::{arctan_space, constant_space};
    use std::sync::Arc;

    #[test]
    fn constant_potential_gives_linear_a() {
        let c = -0.3;
        let space = constant_space(c);
        let opts = CylinderOptions {
            a0: 1.5,
            theta0: 0.2,
            ..Default::default()
        };
        let cyl = build_cylinder(&space, &[0.4, -0.1], (-2.0, 3.0), &opts).unwrap();
        assert_eq!(cyl.s_range(), (-2.0, 3.0));
        for s in [-2.0, -0.7, 0.0, 1.3, 3.0] {
            assert!((cyl.a(s).unwrap() - (1.5 + TAU * c.exp() * s)).abs() < 1e-12);
            assert!((cyl.theta(s).unwrap() - 0.2).abs() < 1e-15);
            assert!((cyl.gamma(s).unwrap() - DVector::from_vec(vec![0.4, -0.1])).amax() < 1e-15);
        }
        let (a, u) = cyl.eval(1.0, 0.25).unwrap();
        assert!((a - cyl.a(1.0).unwrap()).abs() == 0.0);
        assert!((u[0] - (0.2 + TAU * 0.25)).abs() < 1e-14);
    }

    #[test]
    fn arctan_cylinder_is_monotone_and_convex() {
        let cyl = build_cylinder(
            &arctan_space(),
            &[0.0, 0.0],
            (-5.0, 5.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let xs: Vec<f64> = cyl.gamma_nodes().iter().map(|g| g[0]).collect();
        assert!(xs.windows(2).all(|w| w[1] > w[0]));
        assert!(cyl.min_a_rate() > 0.0);
        // e^{arctan x} increases along the flow, so ȧ does too
        assert!(cyl.max_a_rate_drop() <= 1e-12);
        // x³/3 + x = 2πs exactly
        for s in [-5.0, -1.0, 0.5, 5.0] {
            let x = cyl.gamma(s).unwrap()[0];
            assert!((x.powi(3) / 3.0 + x - TAU * s).abs() < 1e-7, "s={s}");
            assert!(cyl.theta(s).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn pullback_of_lambda_is_two_pi_dt() {
        let space = arctan_space();
        let cyl = build_cylinder(
            &space,
            &[0.2, 1.0],
            (-1.0, 1.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let lambda = space.lambda();
        for s in [-0.9, -0.2, 0.4, 0.95] {
            let (_, u) = cyl.eval(s, 0.3).unwrap();
            let y = cyl.state_derivative(s).unwrap();
            let u_s = y.rows(0, 3).into_owned();
            let lam = lambda.eval(u.as_slice());
            assert!(lam.dot(&u_s).abs() < 1e-9);
            assert!((lam.dot(&cyl.u_t(s, 0.3).unwrap()) - TAU).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let cyl = build_cylinder(
            &arctan_space(),
            &[0.0, 0.0],
            (0.0, 1.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let csv = cyl.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "s,a,theta_lift,gamma_0,gamma_1");
        assert_eq!(lines.count(), cyl.nodes().len());
    }

    #[test]
    fn range_must_contain_start() {
        let r = build_cylinder(
            &arctan_space(),
            &[0.0, 0.0],
            (0.5, 1.0),
            &CylinderOptions::default(),
        );
        assert!(matches!(r, Err(PrequantError::Domain(_))));
    }

    #[test]
    fn failure_keeps_partial_cylinder() {
        // f = x³ blows up in finite time along its gradient flow
        let space = PrequantSpace::new(
            Arc::new(StandardAlpha::on_plane_pairs(1)),
            Arc::new(ConstantStructure::standard(2)),
            Arc::new(ScalarFn::new(
                2,
                |x| x[0].powi(3),
                |x| DVector::from_vec(vec![3.0 * x[0] * x[0], 0.0]),
            )),
        )
        .unwrap();
        let opts = CylinderOptions {
            max_steps: 100_000,
            ..Default::default()
        };
        match build_cylinder(&space, &[1.0, 0.0], (0.0, 10.0), &opts) {
            Err(PrequantError::Integration { partial, .. }) => {
                let p = partial.expect("partial cylinder");
                assert!(p.s_range().1 > 0.0 && p.s_range().1 < 10.0);
            }
            other => panic!(
                "expected an integration failure, got {:?}",
                other.map(|c| c.s_range())
            ),
        }
    }
}
