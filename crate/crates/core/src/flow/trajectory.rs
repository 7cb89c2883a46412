use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::dense::HermiteCurve;
use super::gradient::gradient_from_differential;
use super::ode::{integrate, Method, OdeOptions, OdeSolution, OdeStats, RhsError, Termination};
use super::FlowError;
use crate::diffgeo::{canonical_angle, ChartPoint, MetricField, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    /// `γ' = ∇F`; the flow parameter is the gradient-flow time.
    RawTime,
    /// `γ' = ∇F / |∇F|_g`; the flow parameter is arc length.
    UnitSpeed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    /// Stop once `s > -s_stop`.
    pub s_stop: Option<f64>,
    pub max_arc_length: f64,
    pub max_tau: f64,
    pub max_steps: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            s_stop: Some(1e-2),
            max_arc_length: 1e4,
            max_tau: 1e12,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    pub mode: FlowMode,
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    /// Follow `-∇F` instead of `∇F`.
    pub backward: bool,
    /// Coordinate playing the role of `s`.
    pub s_index: usize,
    /// Angular coordinate whose lift is tracked, if any.
    pub angle_index: Option<usize>,
    pub stop: StopCriteria,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            mode: FlowMode::UnitSpeed,
            method: Method::Radau,
            rtol: 1e-8,
            atol: 1e-10,
            h_max: f64::INFINITY,
            backward: false,
            s_index: 0,
            angle_index: Some(1),
            stop: StopCriteria::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowTermination {
    SThreshold,
    ArcLength,
    MaxTau,
    MaxSteps,
    /// `dF = 0` at the start point.
    Stationary,
    /// Integration aborted; only the accepted prefix is present.
    Failed,
}

/// Sampled gradient-flow orbit. Angular coordinates are stored as continuous
/// lifts; canonical values are derived.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub mode: FlowMode,
    pub tau: Vec<f64>,
    pub states: Vec<ChartPoint>,
    pub potential: Vec<f64>,
    pub arc_length: Vec<f64>,
    /// `±g⁻¹dF` at each node, independent of the mode.
    pub gradients: Vec<DVector<f64>>,
    /// `(g⁻¹)_{ss}` at each node.
    pub dual_ss: Vec<f64>,
    pub termination: FlowTermination,
    pub stats: OdeStats,
    s_index: usize,
    angle_index: Option<usize>,
    curve: Option<HermiteCurve>,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn s_index(&self) -> usize {
        self.s_index
    }

    pub fn angle_index(&self) -> Option<usize> {
        self.angle_index
    }

    pub fn s(&self, k: usize) -> f64 {
        self.states[k].lift(self.s_index)
    }

    pub fn s_values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.s(k)).collect()
    }

    /// Lifted angle `t̃`; zero when no angle is tracked.
    pub fn t_lift(&self, k: usize) -> f64 {
        self.angle_index.map_or(0.0, |i| self.states[k].lift(i))
    }

    pub fn t_lift_values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.t_lift(k)).collect()
    }

    pub fn t_canonical(&self, k: usize) -> f64 {
        canonical_angle(self.t_lift(k))
    }

    /// `z = 1/s + t̃`.
    pub fn z(&self, k: usize) -> f64 {
        1.0 / self.s(k) + self.t_lift(k)
    }

    pub fn z_values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.z(k)).collect()
    }

    /// Quintic Hermite interpolant of `(x, arc length)` in the flow
    /// parameter. Absent for failed or single-node runs.
    pub fn dense(&self) -> Option<&HermiteCurve> {
        self.curve.as_ref()
    }

    /// Interpolated chart coordinates at flow parameter `tau`.
    pub fn coords_at(&self, tau: f64) -> Option<Vec<f64>> {
        let y = self.curve.as_ref()?.eval(tau)?;
        Some(y.as_slice()[..y.len() - 1].to_vec())
    }

    /// CSV with header `tau,s,t_canonical,t_lift,z,F,arclen`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,s,t_canonical,t_lift,z,F,arclen\n");
        for k in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.tau[k],
                self.s(k),
                self.t_canonical(k),
                self.t_lift(k),
                self.z(k),
                self.potential[k],
                self.arc_length[k]
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

struct Field<'a> {
    f: &'a dyn ScalarField,
    g: &'a dyn MetricField,
    sign: f64,
}

impl Field<'_> {
    /// Returns `(±g⁻¹dF, |dF|_g)`, with the norm computed after rescaling
    /// so that it does not underflow where `dF` is tiny.
    fn gradient(&self, x: &[f64]) -> Result<(DVector<f64>, f64), FlowError> {
        let df = self.f.differential(x);
        if df.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidInput(format!("non-finite dF at {x:?}")));
        }
        let v = gradient_from_differential(&df, self.g, x)?;
        let m = df.amax();
        let norm = if m == 0.0 {
            0.0
        } else {
            m * ((&df / m).dot(&(&v / m))).max(0.0).sqrt()
        };
        Ok((v * self.sign, norm))
    }
}

/// Integrates the gradient flow of `f` for the metric `g` from `x0`.
pub fn integrate_flow(
    f: &dyn ScalarField,
    g: &dyn MetricField,
    x0: &ChartPoint,
    opts: &FlowOptions,
) -> Result<FlowTrajectory, FlowError> {
    let dim = x0.dim();
    if f.dim() != dim || g.dim() != dim {
        return Err(FlowError::InvalidInput(format!(
            "dimension mismatch: point {dim}, field {}, metric {}",
            f.dim(),
            g.dim()
        )));
    }
    if opts.s_index >= dim || opts.angle_index.is_some_and(|i| i >= dim) {
        return Err(FlowError::InvalidInput(
            "s or angle index out of range".into(),
        ));
    }
    let field = Field {
        f,
        g,
        sign: if opts.backward { -1.0 } else { 1.0 },
    };
    let mode = opts.mode;
    let mut rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>, RhsError> {
        let x = &y.as_slice()[..dim];
        let (v, norm) = field.gradient(x).map_err(|e| RhsError {
            t,
            message: e.to_string(),
        })?;
        let mut out = DVector::zeros(dim + 1);
        match mode {
            FlowMode::RawTime => {
                out.rows_mut(0, dim).copy_from(&v);
                out[dim] = norm;
            }
            FlowMode::UnitSpeed if norm > 0.0 => {
                out.rows_mut(0, dim).copy_from(&(v / norm));
                out[dim] = 1.0;
            }
            FlowMode::UnitSpeed => {}
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(RhsError {
                t,
                message: format!("non-finite velocity at {x:?}"),
            });
        }
        Ok(out)
    };

    let mut y0 = DVector::zeros(dim + 1);
    y0.rows_mut(0, dim).copy_from_slice(x0.coords());

    let (_, norm0) = field.gradient(x0.coords())?;
    if norm0 == 0.0 {
        let sol = OdeSolution {
            t: vec![0.0],
            y: vec![y0.clone()],
            dy: vec![DVector::zeros(dim + 1)],
            termination: Termination::ReachedEnd,
            stats: OdeStats::default(),
        };
        return Ok(assemble(
            &field,
            x0,
            opts,
            &sol,
            FlowTermination::Stationary,
            None,
        ));
    }

    let ode_opts = OdeOptions {
        method: opts.method,
        rtol: opts.rtol,
        atol: opts.atol,
        h0: None,
        h_max: opts.h_max,
        max_steps: opts.stop.max_steps,
    };
    let stop_s = opts.stop.s_stop;
    let max_len = opts.stop.max_arc_length;
    let s_index = opts.s_index;
    let crossed = move |y: &DVector<f64>| stop_s.is_some_and(|eps| y[s_index] > -eps);
    let mut stop = |_t: f64, y: &DVector<f64>| crossed(y) || y[dim] >= max_len;

    match integrate(&mut rhs, 0.0, y0, opts.stop.max_tau, &ode_opts, &mut stop) {
        Ok(sol) => {
            let termination = match sol.termination {
                Termination::Stopped if crossed(sol.last()) => FlowTermination::SThreshold,
                Termination::Stopped => FlowTermination::ArcLength,
                Termination::ReachedEnd => FlowTermination::MaxTau,
                Termination::MaxSteps => FlowTermination::MaxSteps,
            };
            let curve = if sol.t.len() >= 2 {
                HermiteCurve::from_solution(&sol, &mut rhs).ok()
            } else {
                None
            };
            Ok(assemble(&field, x0, opts, &sol, termination, curve))
        }
        Err(failure) => {
            let partial = assemble(
                &field,
                x0,
                opts,
                &failure.partial,
                FlowTermination::Failed,
                None,
            );
            Err(FlowError::Integration {
                source: failure.error,
                partial: Box::new(partial),
            })
        }
    }
}

fn assemble(
    field: &Field<'_>,
    x0: &ChartPoint,
    opts: &FlowOptions,
    sol: &OdeSolution,
    termination: FlowTermination,
    curve: Option<HermiteCurve>,
) -> FlowTrajectory {
    let dim = x0.dim();
    let n = sol.t.len();
    let mut states = Vec::with_capacity(n);
    let mut potential = Vec::with_capacity(n);
    let mut arc_length = Vec::with_capacity(n);
    let mut gradients = Vec::with_capacity(n);
    let mut dual_ss = Vec::with_capacity(n);
    for y in &sol.y {
        let x = &y.as_slice()[..dim];
        states.push(x0.with_coords(x.to_vec()));
        potential.push(field.f.value(x));
        arc_length.push(y[dim]);
        gradients.push(
            field
                .gradient(x)
                .map(|(v, _)| v)
                .unwrap_or_else(|_| DVector::from_element(dim, f64::NAN)),
        );
        dual_ss.push(
            field
                .g
                .metric(x)
                .cholesky()
                .map_or(f64::NAN, |c| c.inverse()[(opts.s_index, opts.s_index)]),
        );
    }
    FlowTrajectory {
        mode: opts.mode,
        tau: sol.t.clone(),
        states,
        potential,
        arc_length,
        gradients,
        dual_ss,
        termination,
        stats: sol.stats.clone(),
        s_index: opts.s_index,
        angle_index: opts.angle_index,
        curve,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffgeo::{ConstantMetric, ScalarFn};
    use crate::spiral::{FDeltaField, SpiralParams};
    use std::f64::consts::TAU;

    fn spiral_point(s: f64, t: f64) -> ChartPoint {
        ChartPoint::new(vec![s, t], vec![1])
    }

    #[test]
    fn linear_region_is_a_straight_line() {
        let delta = 0.5;
        let f = FDeltaField(SpiralParams::new(delta));
        let opts = FlowOptions {
            mode: FlowMode::RawTime,
            method: Method::DormandPrince,
            stop: StopCriteria {
                s_stop: None,
                max_tau: 1.9 * delta,
                ..Default::default()
            },
            ..Default::default()
        };
        let traj = integrate_flow(
            &f,
            &ConstantMetric::euclidean(2),
            &spiral_point(-3.0 * delta, 0.7),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.termination, FlowTermination::MaxTau);
        for k in 0..traj.len() {
            assert!((traj.s(k) - (-3.0 * delta + traj.tau[k])).abs() < 1e-8);
            assert!((traj.t_lift(k) - 0.7).abs() < 1e-12);
            assert!((traj.arc_length[k] - traj.tau[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_potential_has_no_winding() {
        let f = ScalarFn::new(2, |x| x[0], |_| DVector::from_vec(vec![1.0, 0.0]));
        let opts = FlowOptions {
            stop: StopCriteria {
                s_stop: Some(0.1),
                ..Default::default()
            },
            ..Default::default()
        };
        let traj = integrate_flow(
            &f,
            &ConstantMetric::euclidean(2),
            &spiral_point(-2.0, 1.0),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.termination, FlowTermination::SThreshold);
        assert!(traj.potential.windows(2).all(|w| w[1] > w[0]));
        assert!(traj
            .t_lift_values()
            .iter()
            .all(|&t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn spiral_flow_winds_at_least_twice() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let opts = FlowOptions {
            stop: StopCriteria {
                s_stop: Some(0.05),
                ..Default::default()
            },
            ..Default::default()
        };
        let traj = integrate_flow(
            &f,
            &ConstantMetric::euclidean(2),
            &spiral_point(-0.5, 0.0),
            &opts,
        )
        .unwrap();
        assert_eq!(traj.termination, FlowTermination::SThreshold);
        let t = traj.t_lift_values();
        assert!(
            t.last().unwrap() - t[0] >= 2.0 * TAU,
            "winding {}",
            (t.last().unwrap() - t[0]) / TAU
        );
        for w in traj.potential.windows(2) {
            assert!(w[1] >= w[0] - 1e-7);
        }
    }

    #[test]
    fn stationary_start() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let traj = integrate_flow(
            &f,
            &ConstantMetric::euclidean(2),
            &spiral_point(0.3, 0.0),
            &FlowOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, FlowTermination::Stationary);
        assert_eq!(traj.len(), 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let opts = FlowOptions {
            stop: StopCriteria {
                s_stop: Some(0.3),
                ..Default::default()
            },
            ..Default::default()
        };
        let traj = integrate_flow(
            &f,
            &ConstantMetric::euclidean(2),
            &spiral_point(-0.5, 0.0),
            &opts,
        )
        .unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("tau,s,t_canonical,t_lift,z,F,arclen"));
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), traj.len());
        assert!(rows
            .iter()
            .all(|r| r.split(',').count() == 7 && r.split(',').all(|v| v.parse::<f64>().is_ok())));
    }

    #[test]
    fn raw_velocity_matches_gradient_at_midpoints() {
        let f = FDeltaField(SpiralParams::new(1.0));
        let g = ConstantMetric(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.3, 0.2, 0.2, 0.8],
        ));
        let opts = FlowOptions {
            mode: FlowMode::RawTime,
            stop: StopCriteria {
                s_stop: Some(0.25),
                ..Default::default()
            },
            ..Default::default()
        };
        let traj = integrate_flow(&f, &g, &spiral_point(-0.6, 0.4), &opts).unwrap();
        let curve = traj.dense().unwrap();
        for w in traj.tau.windows(2) {
            let m = 0.5 * (w[0] + w[1]);
            let eps = 1e-3 * (w[1] - w[0]);
            let fd = (curve.eval(m + eps).unwrap() - curve.eval(m - eps).unwrap()) / (2.0 * eps);
            let mid = curve.eval(m).unwrap();
            let v = super::super::riemannian_gradient(&f, &g, &mid.as_slice()[..2]).unwrap();
            let err = (fd.rows(0, 2) - &v).norm() / v.norm();
            assert!(err < 1e-6, "err {err} at tau {m}");
        }
    }
}
