use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::phi::{ExtendedJ, KnotModel, PhiMap};
use super::wspace::{p_norm, GJ1Metric, PlaneProfileField, WSpace};
use super::{KnotError, TorusCoverage};
use crate::diffgeo::{ChartPoint, ConformalForm, ContactData, MetricField, ScalarField};
use crate::flow::{
    detect_omega_limit, integrate_flow, FlowOptions, FlowTermination, Method, StopCriteria,
};
use crate::prequant::{
    build_cylinder, holomorphy_residual, puncture_mass, CylinderMap, CylinderOptions,
    LiftedCylinder, PrequantSpace, ResidualGrid, ResidualReport,
};
use crate::spiral::{plane_profile, plane_profile_differential, FDeltaField, SpiralParams};

/// `diag(1, e^{−4ρ})` in the chart `(σ, θ) = (ρ − log r₀, θ)` of the axis
/// slice `p = 0`. Half of `g_{j₁}` there, so the gradient lines of `F₁` for
/// it are those of `G`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneChartMetric {
    pub r0: f64,
}

impl MetricField for PlaneChartMetric {
    fn dim(&self) -> usize {
        2
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let rho = x[0] + self.r0.ln();
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (-4.0 * rho).exp()]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneOptions {
    pub s_range: (f64, f64),
    pub cylinder: CylinderOptions,
    pub flow: FlowOptions,
    pub band: f64,
    pub bins: usize,
    /// The tail window is where `ρ < log r₀ − 1 − tail_margin`.
    pub tail_margin: f64,
    pub tail_samples: usize,
}

impl Default for PlaneOptions {
    fn default() -> Self {
        Self {
            s_range: (-2.5, 40.0),
            cylinder: CylinderOptions {
                h_max: 0.01,
                ..CylinderOptions::default()
            },
            flow: FlowOptions::default(),
            band: 0.05,
            bins: 36,
            tail_margin: 0.1,
            tail_samples: 200,
        }
    }
}

impl PlaneOptions {
    /// Long integration with the implicit method, far enough for `|z|` to
    /// pass `0.9 r₀`; the approach to `r₀` is logarithmically slow.
    pub fn long_range() -> Self {
        Self {
            s_range: (-2.5, 30_000.0),
            cylinder: CylinderOptions {
                method: Method::Radau,
                rtol: 1e-12,
                atol: 1e-14,
                h_max: 1.0,
                ..CylinderOptions::default()
            },
            ..Self::default()
        }
    }
}

/// Constants of the closed form `ũ(s, t) = (a₁ + C e^{4πs}, t₁ + 2πt, θ₁, 0,
/// 2πs + s₁)` fitted on the tail window.
#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub window: (f64, f64),
    pub a1: f64,
    pub c_fit: f64,
    /// `e^{2s₁}/2`, the coefficient obtained by integrating `a' = 2πe^{2ρ}`.
    pub c_expected: f64,
    pub s1: f64,
    pub theta1: f64,
    pub t1: f64,
    /// `max |a − a₁ − C e^{4πs}| / max |C e^{4πs}|` over the window.
    pub relative_residual: f64,
    /// Largest spread of `ρ − 2πs`, `θ` and the fiber angle over the window.
    pub max_constant_spread: f64,
}

pub struct LiftedPlane {
    pub w: WSpace,
    pub r0: f64,
    pub start: Vec<f64>,
    pub space: PrequantSpace,
    pub cylinder: LiftedCylinder,
    pub tail: TailFit,
    /// Coverage of `S¹ × {0} × {|z| = r₀}`.
    pub coverage: TorusCoverage,
}

impl LiftedPlane {
    pub fn pushed(&self) -> PushedPlane<'_> {
        PushedPlane {
            plane: self,
            phi: PhiMap { n: self.w.n() },
        }
    }

    pub fn rho(&self, s: f64) -> Option<f64> {
        self.cylinder.gamma(s).map(|g| g[g.len() - 1])
    }
}

/// `ṽ = (a, Φ∘u)` into `R × S¹ × R^{2n}`.
pub struct PushedPlane<'a> {
    plane: &'a LiftedPlane,
    phi: PhiMap,
}

impl CylinderMap for PushedPlane<'_> {
    fn target_dim(&self) -> usize {
        self.phi.dim()
    }
    fn s_range(&self) -> (f64, f64) {
        self.plane.cylinder.s_range()
    }
    fn eval(&self, s: f64, t: f64) -> Option<(f64, DVector<f64>)> {
        let (a, u) = self.plane.cylinder.eval(s, t)?;
        Some((a, self.phi.forward(u.as_slice())))
    }
    fn u_t(&self, s: f64, t: f64) -> Option<DVector<f64>> {
        let (_, u) = self.plane.cylinder.eval(s, t)?;
        Some(self.phi.jacobian(u.as_slice()).column(0) * TAU)
    }
}

/// `ψ(z) = (log|z|/2π, arg z/2π)`.
pub fn psi(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y).ln() / TAU, y.atan2(x) / TAU)
}

/// `F̃ = G(θ, p, log r) − 2 log r` on `S¹ × R^{2n}`, with `r = |(x_n, y_n)|`;
/// identically zero where `log r < log r₀ − 1`, which covers the locus.
#[derive(Debug, Clone, Copy)]
pub struct FTildeField {
    pub n: usize,
    pub r0: f64,
}

impl FTildeField {
    fn rho(&self, x: &[f64]) -> Option<f64> {
        let m = 2 * self.n + 1;
        let r2 = x[m - 2] * x[m - 2] + x[m - 1] * x[m - 1];
        let rho = 0.5 * r2.ln();
        (rho >= self.r0.ln() - 1.0).then_some(rho)
    }
}

impl ScalarField for FTildeField {
    fn dim(&self) -> usize {
        2 * self.n + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        match self.rho(x) {
            Some(rho) => plane_profile(x[0], rho, self.r0) - 2.0 * rho,
            None => 0.0,
        }
    }
    fn differential(&self, x: &[f64]) -> DVector<f64> {
        let m = 2 * self.n + 1;
        let mut d = DVector::zeros(m);
        if let Some(rho) = self.rho(x) {
            let (g_theta, g_rho) = plane_profile_differential(x[0], rho, self.r0);
            let (xn, yn) = (x[m - 2], x[m - 1]);
            let r2 = xn * xn + yn * yn;
            d[0] = g_theta;
            d[m - 2] = (g_rho - 2.0) * xn / r2;
            d[m - 1] = (g_rho - 2.0) * yn / r2;
        }
        d
    }
}

/// `(e^{F̃}λ₀, J)` with `J` the extension of `Φ_* j̃₁`, optionally with the
/// last block negated.
pub fn plane_contact(model: &KnotModel, r0: f64, flip_last: bool) -> ContactData {
    let lambda = Arc::new(ConformalForm::new(
        model.lambda0(),
        Arc::new(FTildeField { n: model.n(), r0 }),
    ));
    let j = ExtendedJ {
        flip_last,
        ..model.extended_j()
    };
    ContactData::new(lambda, Arc::new(j))
}

fn fit_tail(cyl: &LiftedCylinder, r0: f64, opts: &PlaneOptions) -> Result<TailFit, KnotError> {
    let m = cyl.base_dim();
    let limit = r0.ln() - 1.0 - opts.tail_margin;
    let nodes = cyl.nodes();
    let gammas = cyl.gamma_nodes();
    let lo = nodes[0];
    let mut hi = lo;
    for (s, g) in nodes.iter().zip(&gammas) {
        if g[m - 1] >= limit {
            break;
        }
        hi = *s;
    }
    // refine the edge between the last inside node and the next one
    if let Some(next) = nodes.iter().find(|s| **s > hi) {
        let (mut a, mut b) = (hi, *next);
        for _ in 0..100 {
            let c = 0.5 * (a + b);
            if cyl.gamma(c).expect("inside")[m - 1] < limit {
                a = c;
            } else {
                b = c;
            }
        }
        hi = a;
    }
    if !(hi > lo) {
        return Err(KnotError::TailFit(format!(
            "no part of the cylinder has ρ < {limit}"
        )));
    }
    let k = opts.tail_samples.max(3);
    let ss: Vec<f64> = (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect();
    let states: Vec<DVector<f64>> = ss.iter().map(|&s| cyl.state(s).expect("inside")).collect();
    let mean = |f: &dyn Fn(usize) -> f64| (0..k).map(f).sum::<f64>() / k as f64;
    let spread =
        |f: &dyn Fn(usize) -> f64, c: f64| (0..k).map(|i| (f(i) - c).abs()).fold(0.0, f64::max);
    let s1_of = |i: usize| states[i][m] - TAU * ss[i];
    let theta_of = |i: usize| states[i][1];
    let fiber_of = |i: usize| states[i][0];
    let (s1, theta1, t1) = (mean(&s1_of), mean(&theta_of), mean(&fiber_of));
    let max_constant_spread = spread(&s1_of, s1)
        .max(spread(&theta_of, theta1))
        .max(spread(&fiber_of, t1));

    // a = a₁ + C x with x = e^{4πs}, least squares
    let xs: Vec<f64> = ss.iter().map(|s| (2.0 * TAU * s).exp()).collect();
    let a: Vec<f64> = states.iter().map(|y| y[m + 1]).collect();
    let (a1, c_fit) = linear_fit(&xs, &a);
    let peak = xs.iter().map(|x| (c_fit * x).abs()).fold(0.0, f64::max);
    let relative_residual = xs
        .iter()
        .zip(&a)
        .map(|(x, v)| (v - a1 - c_fit * x).abs())
        .fold(0.0, f64::max)
        / peak;
    Ok(TailFit {
        window: (lo, hi),
        a1,
        c_fit,
        c_expected: 0.5 * (2.0 * s1).exp(),
        s1,
        theta1,
        t1,
        relative_residual,
        max_constant_spread,
    })
}

/// Least-squares `y ≈ c₀ + c₁x`.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let c1 = sxy / sxx;
    (my - c1 * mx, c1)
}

/// Lifts the flow of `G` through `start = (θ₀, 0, ρ₀) ∈ W`, fits the tail
/// constants and measures the limit torus with the unit-speed flow in the
/// `(σ, θ)` chart.
pub fn build_plane(
    model: &KnotModel,
    r0: f64,
    start: &[f64],
    opts: &PlaneOptions,
) -> Result<LiftedPlane, KnotError> {
    let w = model.w().clone();
    let m = w.dim();
    if start.len() != m {
        return Err(KnotError::Contract(format!(
            "start must lie in W of dimension {m}"
        )));
    }
    if start[1..m - 1].iter().any(|v| *v != 0.0) {
        return Err(KnotError::Contract("plane starts must lie on p = 0".into()));
    }
    if !(r0 > 0.0) {
        return Err(KnotError::Contract(format!(
            "r0 must be positive, got {r0}"
        )));
    }
    let rho0 = start[m - 1];
    if rho0 >= r0.ln() {
        return Err(KnotError::Domain(format!(
            "ρ₀ = {rho0} ≥ log r₀ = {}: G is constant there and the orbit is stationary",
            r0.ln()
        )));
    }
    let space = PrequantSpace::new(
        w.beta_form(),
        w.j1_structure(),
        Arc::new(PlaneProfileField { n: w.n(), r0 }),
    )?;
    let cylinder = build_cylinder(&space, start, opts.s_range, &opts.cylinder)?;
    let tail = fit_tail(&cylinder, r0, opts)?;

    let flow_opts = FlowOptions {
        s_index: 0,
        angle_index: Some(1),
        backward: false,
        ..opts.flow
    };
    let traj = integrate_flow(
        &FDeltaField(SpiralParams::new(1.0)),
        &PlaneChartMetric { r0 },
        &ChartPoint::new(vec![rho0 - r0.ln(), start[0]], vec![1]),
        &flow_opts,
    )?;
    let coverage = TorusCoverage::from_limit(&detect_omega_limit(&traj, opts.band, opts.bins)?);
    Ok(LiftedPlane {
        w,
        r0,
        start: start.to_vec(),
        space,
        cylinder,
        tail,
        coverage,
    })
}

/// Grid of the pushed plane covering `0.1 < e^{ρ(s)} < 0.9 r₀`.
pub fn plane_residual_grid(
    plane: &LiftedPlane,
    n_s: usize,
    n_t: usize,
) -> Result<ResidualGrid, KnotError> {
    let nodes = plane.cylinder.nodes();
    let rho = |s: f64| plane.rho(s).expect("inside");
    let crossing = |level: f64| -> Option<f64> {
        let k = nodes.iter().position(|s| rho(*s) >= level)?;
        if k == 0 {
            return None;
        }
        let (mut a, mut b) = (nodes[k - 1], nodes[k]);
        for _ in 0..100 {
            let c = 0.5 * (a + b);
            if rho(c) < level {
                a = c;
            } else {
                b = c;
            }
        }
        Some(b)
    };
    let lo = crossing(0.1f64.ln())
        .ok_or_else(|| KnotError::Domain("the cylinder never reaches |z| = 0.1".into()))?;
    let hi = crossing((0.9 * plane.r0).ln())
        .ok_or_else(|| KnotError::Domain("the cylinder never reaches |z| = 0.9 r0".into()))?;
    Ok(ResidualGrid {
        s_range: (lo, hi),
        n_s,
        n_t,
    })
}

/// Cauchy–Riemann residual of `ṽ` for `(e^{F̃}λ₀, J)`.
pub fn holomorphy_residual_plane(
    plane: &LiftedPlane,
    model: &KnotModel,
    grid: &ResidualGrid,
    h: f64,
    flip_last: bool,
) -> Result<ResidualReport, KnotError> {
    if grid.s_range.0 < (10.0 * h).ln() / TAU {
        return Err(KnotError::Domain(format!(
            "grid reaches |z| < 10h = {}",
            10.0 * h
        )));
    }
    let contact = plane_contact(model, plane.r0, flip_last);
    Ok(holomorphy_residual(&plane.pushed(), &contact, grid, h)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovabilityReport {
    pub radii: Vec<f64>,
    /// `a ≈ a₁ + K|z|²` over all circles.
    pub a1: f64,
    pub quadratic_coefficient: f64,
    /// Coefficient from the tail fit, `e^{2s₁}/2`.
    pub expected_coefficient: f64,
    pub quadratic_relative_residual: f64,
    /// `w ≈ c z` for the last two coordinates.
    pub linear_coefficient: (f64, f64),
    pub linear_residual: f64,
    /// `max |ṽ(ψ(z)) − ṽ(0) − c z|` on `|z| = 10⁻²` and `|z| = 10⁻³`.
    pub taylor_residual: (f64, f64),
    pub taylor_ratio: f64,
    /// Largest variance of θ on `|z| = 10⁻³` and of `p` anywhere.
    pub theta_variance: f64,
    pub max_p: f64,
    /// Loop integrals of `ṽ*(e^{F̃}λ₀)` along the circles, outermost first.
    pub masses: Vec<f64>,
    pub mass_at_1e3: f64,
    pub coverage: TorusCoverage,
}

fn circle(r: f64, count: usize) -> Vec<(f64, f64)> {
    (0..count)
        .map(|k| {
            let w = TAU * (k as f64 + 0.25) / count as f64;
            (r * w.cos(), r * w.sin())
        })
        .collect()
}

/// Samples `ṽ∘ψ` on circles `|z| = 2^{−k}`, `k ∈ ks`, and on `|z| = 10⁻²,
/// 10⁻³`, and fits the closed form near the puncture.
pub fn removable_singularity_check(
    plane: &LiftedPlane,
    model: &KnotModel,
    ks: std::ops::RangeInclusive<i32>,
    per_circle: usize,
) -> Result<RemovabilityReport, KnotError> {
    let pushed = plane.pushed();
    let m = pushed.target_dim();
    let (s_lo, _) = pushed.s_range();
    let eval = |x: f64, y: f64| -> Result<(f64, DVector<f64>), KnotError> {
        let (s, t) = psi(x, y);
        pushed.eval(s, t).ok_or_else(|| {
            KnotError::Domain(format!(
                "|z| = {} is below the cylinder (s_min = {s_lo})",
                x.hypot(y)
            ))
        })
    };
    let radii: Vec<f64> = ks.map(|k| 2f64.powi(-k)).collect();
    if let Some(r) = radii.iter().find(|r| r.ln() / TAU > plane.tail.window.1) {
        return Err(KnotError::Removability(format!(
            "circle |z| = {r} lies outside the tail window"
        )));
    }
    let mut rsq = vec![];
    let mut avals = vec![];
    let mut zs = vec![];
    let mut ws = vec![];
    let mut max_p: f64 = 0.0;
    for &r in &radii {
        for (x, y) in circle(r, per_circle) {
            let (a, v) = eval(x, y)?;
            rsq.push(r * r);
            avals.push(a);
            zs.push((x, y));
            ws.push((v[m - 2], v[m - 1]));
            for i in 1..m - 2 {
                max_p = max_p.max(v[i].abs());
            }
        }
    }
    let (a1, quad) = linear_fit(&rsq, &avals);
    let peak = rsq.iter().map(|x| (quad * x).abs()).fold(0.0, f64::max);
    let quadratic_relative_residual = rsq
        .iter()
        .zip(&avals)
        .map(|(x, a)| (a - a1 - quad * x).abs())
        .fold(0.0, f64::max)
        / peak;

    // complex least squares for w = c z
    let (mut num_re, mut num_im, mut den) = (0.0, 0.0, 0.0);
    for (&(x, y), &(u, v)) in zs.iter().zip(&ws) {
        // conj(z) w
        num_re += x * u + y * v;
        num_im += x * v - y * u;
        den += x * x + y * y;
    }
    let (c_re, c_im) = (num_re / den, num_im / den);
    let lin = |x: f64, y: f64| (c_re * x - c_im * y, c_re * y + c_im * x);
    let linear_residual = zs
        .iter()
        .zip(&ws)
        .map(|(&(x, y), &(u, v))| {
            let (p, q) = lin(x, y);
            (u - p).hypot(v - q)
        })
        .fold(0.0, f64::max);

    let theta1 = plane.tail.theta1;
    let taylor_at = |r: f64| -> Result<(f64, f64), KnotError> {
        let mut worst: f64 = 0.0;
        let mut thetas = vec![];
        for (x, y) in circle(r, per_circle) {
            let (a, v) = eval(x, y)?;
            let (p, q) = lin(x, y);
            let mut d = DVector::zeros(m + 1);
            d[0] = a - a1;
            d[1] = v[0] - theta1;
            for i in 1..m - 2 {
                d[i + 1] = v[i];
            }
            d[m - 1] = v[m - 2] - p;
            d[m] = v[m - 1] - q;
            worst = worst.max(d.norm());
            thetas.push(v[0]);
        }
        let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
        let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / thetas.len() as f64;
        Ok((worst, var))
    };
    let (r2, _) = taylor_at(1e-2)?;
    let (r3, theta_variance) = taylor_at(1e-3)?;

    let contact = plane_contact(model, plane.r0, false);
    let mut mass_radii = radii.clone();
    mass_radii.push(1e-3);
    let s_grid: Vec<f64> = mass_radii.iter().map(|r| r.ln() / TAU).collect();
    let mass = puncture_mass(&pushed, contact.lambda().as_ref(), &s_grid)?;
    let mass_at_1e3 = *mass.mass_curve.last().expect("nonempty");
    let mut masses = mass.mass_curve;
    masses.pop();

    Ok(RemovabilityReport {
        radii,
        a1,
        quadratic_coefficient: quad,
        expected_coefficient: plane.tail.c_expected,
        quadratic_relative_residual,
        linear_coefficient: (c_re, c_im),
        linear_residual,
        taylor_residual: (r2, r3),
        taylor_ratio: r2 / r3,
        theta_variance,
        max_p,
        masses,
        mass_at_1e3,
        coverage: plane.coverage.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormDriftReport {
    pub initial_norm: f64,
    pub max_deviation: f64,
    pub nodes: usize,
    pub rho_range: (f64, f64),
    pub termination: FlowTermination,
}

/// Follows the `g_{j₁}`-gradient flow of `G` from an off-axis start and
/// records the drift of `|p|_{g₀}`.
pub fn offaxis_norm_drift(
    w: &WSpace,
    r0: f64,
    start: &[f64],
    arc_length: f64,
    opts: &FlowOptions,
) -> Result<NormDriftReport, KnotError> {
    let m = w.dim();
    let f = PlaneProfileField { n: w.n(), r0 };
    let g = GJ1Metric(w.clone());
    let flow_opts = FlowOptions {
        s_index: m - 1,
        angle_index: Some(0),
        stop: StopCriteria {
            s_stop: None,
            max_arc_length: arc_length,
            ..opts.stop
        },
        ..*opts
    };
    let traj = integrate_flow(
        &f,
        &g,
        &ChartPoint::new(start.to_vec(), vec![0]),
        &flow_opts,
    )?;
    let initial_norm = p_norm(w, &start[1..m - 1]);
    let mut max_deviation: f64 = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for st in &traj.states {
        let x = st.coords();
        max_deviation = max_deviation.max((p_norm(w, &x[1..m - 1]) - initial_norm).abs());
        lo = lo.min(x[m - 1]);
        hi = hi.max(x[m - 1]);
    }
    Ok(NormDriftReport {
        initial_norm,
        max_deviation,
        nodes: traj.len(),
        rho_range: (lo, hi),
        termination: traj.termination,
    })
}
