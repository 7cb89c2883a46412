//! Adaptive one-step integrators for autonomous and non-autonomous systems
//! `y' = f(t, y)`: an explicit Dormand–Prince 5(4) pair and a 3-stage Radau
//! IIA (order 5) collocation method for stiff problems. Both share one
//! driver with a PI step-size controller.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Right-hand side evaluation failure (non-finite value, domain exit, ...).
#[derive(Debug, Clone, Error, PartialEq)]
#[error("right-hand side failed at t = {t}: {message}")]
pub struct RhsError {
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); problem too stiff or singular")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error(transparent)]
    Rhs(#[from] RhsError),
}

/// An integration failure together with everything computed before it.
#[derive(Debug, Clone)]
pub struct OdeFailure {
    pub error: OdeError,
    pub partial: OdeSolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DormandPrince,
    Radau,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            method: Method::DormandPrince,
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedEnd,
    Stopped,
    MaxSteps,
}

#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub newton_failures: usize,
}

/// Accepted nodes with states and derivatives.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub dy: Vec<DVector<f64>>,
    pub termination: Termination,
    pub stats: OdeStats,
}

impl OdeSolution {
    pub fn last(&self) -> &DVector<f64> {
        self.y
            .last()
            .expect("solution has at least the initial node")
    }
}

pub type Rhs<'a> = dyn FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, RhsError> + 'a;

struct Attempt {
    y: DVector<f64>,
    f: Option<DVector<f64>>,
    err: f64,
    /// Extra factor on the controller's safety, below 1 when the step was
    /// expensive to solve.
    safety: f64,
}

enum StepOutcome {
    Done(Attempt),
    /// Nonlinear solver failed; retry with a smaller step.
    Retry,
}

trait Stepper {
    /// Order of the error estimate plus one; drives the controller exponents.
    fn q(&self) -> f64;
    fn step(
        &mut self,
        f: &mut Rhs<'_>,
        t: f64,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        h: f64,
        opts: &OdeOptions,
        stats: &mut OdeStats,
    ) -> Result<StepOutcome, RhsError>;
    /// Called after the last attempt was accepted.
    fn accepted(&mut self) {}
}

fn scaled_norm(e: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, opts: &OdeOptions) -> f64 {
    let n = e.len() as f64;
    let sum: f64 = e
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(ei, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn call(
    f: &mut Rhs<'_>,
    t: f64,
    y: &DVector<f64>,
    stats: &mut OdeStats,
) -> Result<DVector<f64>, RhsError> {
    stats.rhs_evals += 1;
    let v = f(t, y)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RhsError {
            t,
            message: "non-finite derivative".into(),
        });
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Dormand–Prince 5(4)

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus embedded fourth-order weights
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct DormandPrince;

impl Stepper for DormandPrince {
    fn q(&self) -> f64 {
        5.0
    }

    fn step(
        &mut self,
        f: &mut Rhs<'_>,
        t: f64,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        h: f64,
        opts: &OdeOptions,
        stats: &mut OdeStats,
    ) -> Result<StepOutcome, RhsError> {
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(f0.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[s][j];
                if a != 0.0 {
                    ys.axpy(h * a, kj, 1.0);
                }
            }
            k.push(call(f, t + DP_C[s] * h, &ys, stats)?);
        }
        // stage 7 is evaluated at the new point (FSAL)
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            y_new.axpy(h * DP_A[6][j], kj, 1.0);
        }
        let mut e = DVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            e.axpy(h * DP_E[j], kj, 1.0);
        }
        let err = scaled_norm(&e, y, &y_new, opts);
        Ok(StepOutcome::Done(Attempt {
            y: y_new,
            f: Some(k.pop().expect("seven stages")),
            err,
            safety: 1.0,
        }))
    }
}

// ---------------------------------------------------------------------------
// Radau IIA, three stages

/// Coefficients of the 3-stage Radau IIA collocation method and of the
/// filtered embedded error estimate.
#[derive(Debug, Clone)]
pub struct RadauTableau {
    pub c: [f64; 3],
    pub a: [[f64; 3]; 3],
    /// Diagonal weight of the embedded formula, the inverse of the real
    /// eigenvalue of `A⁻¹`.
    pub gamma0: f64,
    /// Error estimate is `(I − hγ₀J)⁻¹ (hγ₀ f(y₀) + Σ e_j Z_j)`.
    pub e: [f64; 3],
}

impl RadauTableau {
    pub fn new() -> Self {
        let r6 = 6f64.sqrt();
        let c = [(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0];
        let a = [
            [
                (88.0 - 7.0 * r6) / 360.0,
                (296.0 - 169.0 * r6) / 1800.0,
                (-2.0 + 3.0 * r6) / 225.0,
            ],
            [
                (296.0 + 169.0 * r6) / 1800.0,
                (88.0 + 7.0 * r6) / 360.0,
                (-2.0 - 3.0 * r6) / 225.0,
            ],
            [(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
        ];
        let am = DMatrix::from_fn(3, 3, |i, j| a[i][j]);
        let a_inv = am
            .clone()
            .try_inverse()
            .expect("Radau matrix is invertible");
        // the real eigenvalue of A⁻¹ via the characteristic cubic
        let real_eig = {
            let eig = a_inv.clone().complex_eigenvalues();
            eig.iter()
                .filter(|z| z.im.abs() < 1e-10)
                .map(|z| z.re)
                .next()
                .expect("A⁻¹ has a real eigenvalue")
        };
        let gamma0 = 1.0 / real_eig;
        // embedded quadrature on nodes {0, c1, c2, 1} with weight γ₀ at 0,
        // exact for degree ≤ 2; u collects the weights at (c1, c2, 1)
        let m = DMatrix::from_fn(3, 3, |k, j| c[j].powi(k as i32));
        let rhs = DVector::from_fn(3, |k, _| {
            1.0 / (k as f64 + 1.0) - if k == 0 { gamma0 } else { 0.0 }
        });
        let u = crate::linalg::solve(&m, &rhs).expect("Vandermonde system");
        let b = DVector::from_vec(vec![a[2][0], a[2][1], a[2][2]]);
        // h F = A⁻¹ Z, so Σ (u − b)_i h F_i = Σ_j (A⁻ᵀ(u − b))_j Z_j
        let e_vec = a_inv.transpose() * (u - b);
        Self {
            c,
            a,
            gamma0,
            e: [e_vec[0], e_vec[1], e_vec[2]],
        }
    }
}

impl Default for RadauTableau {
    fn default() -> Self {
        Self::new()
    }
}

const NEWTON_MAX: usize = 7;

struct Radau {
    tab: RadauTableau,
    /// Stage increments of the last attempt: `(t + h, h, Z)`.
    attempt: Option<(f64, f64, DVector<f64>)>,
    /// Same for the last accepted step.
    previous: Option<(f64, f64, DVector<f64>)>,
}

impl Radau {
    fn new() -> Self {
        Self {
            tab: RadauTableau::new(),
            attempt: None,
            previous: None,
        }
    }

    /// Starting stages: extrapolate the previous collocation polynomial when
    /// this step continues it, otherwise an explicit Euler predictor.
    fn predictor(&self, t: f64, f0: &DVector<f64>, h: f64) -> DVector<f64> {
        let n = f0.len();
        let c = &self.tab.c;
        let mut z = DVector::zeros(3 * n);
        match &self.previous {
            Some((t_prev, h_prev, zp)) if *t_prev == t => {
                let nodes = [0.0, c[0], c[1], 1.0];
                let z3 = zp.rows(2 * n, n);
                for i in 0..3 {
                    let tau = 1.0 + c[i] * h / h_prev;
                    let mut zi = -z3.into_owned();
                    for j in 1..4 {
                        let lj: f64 = (0..4)
                            .filter(|&m| m != j)
                            .map(|m| (tau - nodes[m]) / (nodes[j] - nodes[m]))
                            .product();
                        zi.axpy(lj, &zp.rows((j - 1) * n, n), 1.0);
                    }
                    z.rows_mut(i * n, n).copy_from(&zi);
                }
            }
            _ => {
                for i in 0..3 {
                    z.rows_mut(i * n, n).copy_from(&(f0 * (c[i] * h)));
                }
            }
        }
        z
    }
}

fn jacobian_fd(
    f: &mut Rhs<'_>,
    t: f64,
    y: &DVector<f64>,
    stats: &mut OdeStats,
) -> Result<DMatrix<f64>, RhsError> {
    let n = y.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let delta = f64::EPSILON.sqrt() * y[j].abs().max(1e-5);
        let mut yp = y.clone();
        yp[j] += delta;
        let fp = call(f, t, &yp, stats)?;
        let mut ym = y.clone();
        ym[j] -= delta;
        let fm = call(f, t, &ym, stats)?;
        jac.set_column(j, &((fp - fm) / (2.0 * delta)));
    }
    Ok(jac)
}

impl Stepper for Radau {
    fn q(&self) -> f64 {
        4.0
    }

    fn step(
        &mut self,
        f: &mut Rhs<'_>,
        t: f64,
        y: &DVector<f64>,
        f0: &DVector<f64>,
        h: f64,
        opts: &OdeOptions,
        stats: &mut OdeStats,
    ) -> Result<StepOutcome, RhsError> {
        let n = y.len();
        let tab = &self.tab;
        let jac = jacobian_fd(f, t, y, stats)?;
        let mut m = DMatrix::identity(3 * n, 3 * n);
        for i in 0..3 {
            for j in 0..3 {
                let blk = &jac * (h * tab.a[i][j]);
                let mut view = m.view_mut((i * n, j * n), (n, n));
                view -= blk;
            }
        }
        let lu = m.lu();
        let fnewt = (10.0 * f64::EPSILON / opts.rtol).max(0.03f64.min(opts.rtol.sqrt()));
        let mut z = self.predictor(t, f0, h);
        let mut prev_norm = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for iter in 0..NEWTON_MAX {
            iterations = iter + 1;
            let mut fz = DVector::zeros(3 * n);
            for i in 0..3 {
                let yi = y + z.rows(i * n, n);
                let fi = match call(f, t + tab.c[i] * h, &yi, stats) {
                    Ok(v) => v,
                    Err(_) => return Ok(StepOutcome::Retry),
                };
                fz.rows_mut(i * n, n).copy_from(&fi);
            }
            let mut g = -z.clone();
            for i in 0..3 {
                for j in 0..3 {
                    let mut gi = g.rows_mut(i * n, n);
                    gi.axpy(h * tab.a[i][j], &fz.rows(j * n, n), 1.0);
                }
            }
            let dz = match lu.solve(&g) {
                Some(v) => v,
                None => return Ok(StepOutcome::Retry),
            };
            z += &dz;
            let mut norm = 0.0;
            for i in 0..3 {
                let d = dz.rows(i * n, n).into_owned();
                norm += scaled_norm(&d, y, y, opts).powi(2);
            }
            let norm = (norm / 3.0).sqrt();
            if !norm.is_finite() {
                return Ok(StepOutcome::Retry);
            }
            if iter > 0 {
                let theta = norm / prev_norm;
                if theta >= 0.99 {
                    return Ok(StepOutcome::Retry);
                }
                if theta / (1.0 - theta) * norm <= fnewt {
                    converged = true;
                    break;
                }
            } else if norm <= 1e-3 * fnewt {
                converged = true;
                break;
            }
            prev_norm = norm;
        }
        if !converged {
            return Ok(StepOutcome::Retry);
        }
        let y_new = y + z.rows(2 * n, n);
        self.attempt = Some((t + h, h, z.clone()));

        // filtered embedded error estimate
        let filt = (DMatrix::identity(n, n) - &jac * (h * tab.gamma0)).lu();
        let mut rhs = f0 * (h * tab.gamma0);
        for j in 0..3 {
            rhs.axpy(tab.e[j], &z.rows(j * n, n), 1.0);
        }
        let mut err_vec = filt.solve(&rhs).unwrap_or_else(|| rhs.clone());
        let mut err = scaled_norm(&err_vec, y, &y_new, opts);
        if err > 1.0 {
            // second filter pass with f evaluated at the perturbed point
            if let Ok(fp) = call(f, t, &(y + &err_vec), stats) {
                let mut rhs2 = fp * (h * tab.gamma0);
                for j in 0..3 {
                    rhs2.axpy(tab.e[j], &z.rows(j * n, n), 1.0);
                }
                if let Some(v) = filt.solve(&rhs2) {
                    err_vec = v;
                    err = scaled_norm(&err_vec, y, &y_new, opts);
                }
            }
        }
        let safety =
            (2.0 * NEWTON_MAX as f64 + 1.0) / (2.0 * NEWTON_MAX as f64 + iterations as f64);
        Ok(StepOutcome::Done(Attempt {
            y: y_new,
            f: None,
            err,
            safety,
        }))
    }

    fn accepted(&mut self) {
        self.previous = self.attempt.take();
    }
}

// ---------------------------------------------------------------------------
// driver

fn initial_step(
    f: &mut Rhs<'_>,
    t0: f64,
    y0: &DVector<f64>,
    f0: &DVector<f64>,
    dir: f64,
    opts: &OdeOptions,
    q: f64,
    stats: &mut OdeStats,
) -> Result<f64, RhsError> {
    let d0 = scaled_norm(y0, y0, y0, opts);
    let d1 = scaled_norm(f0, y0, y0, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(opts.h_max);
    let y1 = y0 + f0 * (dir * h0);
    let f1 = call(f, t0 + dir * h0, &y1, stats)?;
    let d2 = scaled_norm(&(f1 - f0), y0, y0, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / q)
    };
    Ok((100.0 * h0).min(h1).min(opts.h_max))
}

/// Integrates from `t0` towards `t_end` (either direction). `stop` is
/// queried after each accepted step and ends the integration when it
/// returns true; the stopping node is kept.
pub fn integrate(
    f: &mut Rhs<'_>,
    t0: f64,
    y0: DVector<f64>,
    t_end: f64,
    opts: &OdeOptions,
    stop: &mut dyn FnMut(f64, &DVector<f64>) -> bool,
) -> Result<OdeSolution, Box<OdeFailure>> {
    let mut stepper: Box<dyn Stepper> = match opts.method {
        Method::DormandPrince => Box::new(DormandPrince),
        Method::Radau => Box::new(Radau::new()),
    };
    let q = stepper.q();
    let (alpha, beta) = (0.7 / q, 0.4 / q);
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };

    let mut stats = OdeStats::default();
    let mut sol = OdeSolution {
        t: vec![t0],
        y: vec![y0.clone()],
        dy: Vec::new(),
        termination: Termination::ReachedEnd,
        stats: OdeStats::default(),
    };
    let fail = |error: OdeError, mut sol: OdeSolution, stats: OdeStats| {
        sol.stats = stats;
        Err(Box::new(OdeFailure {
            error,
            partial: sol,
        }))
    };

    let mut f0 = match call(f, t0, &y0, &mut stats) {
        Ok(v) => v,
        Err(e) => return fail(e.into(), sol, stats),
    };
    sol.dy.push(f0.clone());
    if t0 == t_end {
        sol.stats = stats;
        return Ok(sol);
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = match opts.h0 {
        Some(h) => h.abs().min(opts.h_max),
        None => match initial_step(f, t, &y, &f0, dir, opts, q, &mut stats) {
            Ok(h) => h,
            Err(e) => return fail(e.into(), sol, stats),
        },
    };
    let mut err_prev: f64 = 1.0;
    let mut rejected_last = false;

    loop {
        if stats.accepted >= opts.max_steps {
            sol.termination = Termination::MaxSteps;
            break;
        }
        let remaining = (t_end - t) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return fail(
                OdeError::StepUnderflow {
                    t,
                    h,
                    state: y.as_slice().to_vec(),
                },
                sol,
                stats,
            );
        }
        let outcome = match stepper.step(f, t, &y, &f0, dir * h, opts, &mut stats) {
            Ok(o) => o,
            Err(_) if !last || h > h_min => StepOutcome::Retry,
            Err(e) => return fail(e.into(), sol, stats),
        };
        let attempt = match outcome {
            StepOutcome::Retry => {
                stats.newton_failures += 1;
                stats.rejected += 1;
                h *= 0.5;
                rejected_last = true;
                continue;
            }
            StepOutcome::Done(a) => a,
        };
        let err = attempt.err;
        if !err.is_finite() || attempt.y.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.2;
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + dir * h };
            let f_new = match attempt.f {
                Some(v) => v,
                None => match call(f, t_new, &attempt.y, &mut stats) {
                    Ok(v) => v,
                    Err(e) => return fail(e.into(), sol, stats),
                },
            };
            stats.accepted += 1;
            stepper.accepted();
            t = t_new;
            y = attempt.y;
            f0 = f_new;
            sol.t.push(t);
            sol.y.push(y.clone());
            sol.dy.push(f0.clone());
            let err_c = err.max(1e-10);
            let mut fac = 0.9 * attempt.safety * err_c.powf(-alpha) * err_prev.powf(beta);
            fac = fac.clamp(0.2, 10.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.h_max);
            err_prev = err_c;
            rejected_last = false;
            if stop(t, &y) {
                sol.termination = Termination::Stopped;
                break;
            }
            if last {
                sol.termination = Termination::ReachedEnd;
                break;
            }
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-1.0 / q)).max(0.2);
            h *= fac;
            rejected_last = true;
        }
    }
    sol.stats = stats;
    Ok(sol)
}
