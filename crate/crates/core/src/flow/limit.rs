//! Orbit diagnostics near `s = 0`: the z quantity, its barrier inequality,
//! and angular coverage of the limit band.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2, TAU};

use serde::Serialize;

use super::trajectory::FlowTrajectory;
use super::FlowError;

/// `sup |z|` over the nodes with `s < 0`; `NaN` when there are none.
pub fn track_z(traj: &FlowTrajectory) -> f64 {
    (0..traj.len())
        .filter(|&k| traj.s(k) < 0.0)
        .map(|k| traj.z(k).abs())
        .fold(f64::NAN, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// `|normalized z' - (√2 sin(z + π/4) - c)| > 1/8`.
    Pointwise,
    /// z crossed an interval where `√2 sin(z + π/4) < c - 1/8` upwards.
    Upward,
    /// z crossed an interval where `√2 sin(z + π/4) > c + 1/8` downwards.
    Downward,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierViolation {
    pub kind: ViolationKind,
    pub index: usize,
    pub s: f64,
    pub z: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierReport {
    pub c: f64,
    pub kappa: f64,
    pub s_star_requested: f64,
    pub s_star_effective: f64,
    pub calibration_points: usize,
    pub checked_points: usize,
    pub max_deviation: f64,
    pub violations: Vec<BarrierViolation>,
}

impl BarrierReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.checked_points > 0
    }
}

/// Normalized `z'` minus its leading term `√2 sin(z + π/4) - c`, at node `k`.
fn deviation(traj: &FlowTrajectory, k: usize, c: f64) -> Option<f64> {
    let s = traj.s(k);
    if s >= 0.0 {
        return None;
    }
    let v = &traj.gradients[k];
    let (vs, vt) = (v[traj.s_index()], traj.angle_index().map_or(0.0, |i| v[i]));
    // divide e^{1/s} out of both sides before it can underflow
    let e = (1.0 / s).exp();
    let norm = e * traj.dual_ss[k] / s.powi(4);
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let zp = -vs / (s * s) + vt;
    let lead = SQRT_2 * (traj.z(k) + FRAC_PI_4).sin() - c;
    Some(zp / norm - lead)
}

/// Checks the z barrier along a forward flow of `F` whose potential equals
/// `e^{1/s}(sin(1/s + t) - c)` for `s > max(s_star, -plateau)`.
///
/// The remainder of the normalized `z'` is modelled as `κ s²` with κ fitted
/// as twice the largest `|deviation| / s²` seen for `s ∈ (-0.3, -0.15)`.
/// The check then runs beyond `s*_eff = max(s_star, -(8κ)^{-1/2})`, where the
/// model puts the remainder below 1/8.
pub fn verify_z_barrier(
    traj: &FlowTrajectory,
    c: f64,
    s_star: f64,
    plateau: f64,
) -> Result<BarrierReport, FlowError> {
    const CAL: (f64, f64) = (-0.3, -0.15);
    let lo = CAL.0.max(-plateau);
    let mut kappa: f64 = 0.0;
    let mut calibration_points = 0;
    for k in 0..traj.len() {
        let s = traj.s(k);
        if s > lo && s < CAL.1 {
            if let Some(d) = deviation(traj, k, c) {
                kappa = kappa.max(2.0 * d.abs() / (s * s));
                calibration_points += 1;
            }
        }
    }
    if calibration_points == 0 {
        return Err(FlowError::InsufficientIntegration { band: -CAL.1 });
    }
    let s_eff = if kappa > 0.0 {
        s_star.max(-(1.0 / (8.0 * kappa)).sqrt())
    } else {
        s_star
    };

    let first = (0..traj.len()).find(|&k| traj.s(k) > s_eff && traj.s(k) < 0.0);
    let mut report = BarrierReport {
        c,
        kappa,
        s_star_requested: s_star,
        s_star_effective: s_eff,
        calibration_points,
        checked_points: 0,
        max_deviation: 0.0,
        violations: Vec::new(),
    };
    let Some(first) = first else {
        return Ok(report);
    };

    // Intervals of z (shifted by π/4) where the barrier sign is fixed.
    let a = ((c - 0.125) / SQRT_2).asin();
    let up_lo0 = PI - a - FRAC_PI_4;
    let up_hi0 = TAU + a - FRAC_PI_4;
    let b = ((c + 0.125) / SQRT_2).asin();
    let down_lo0 = b - FRAC_PI_4;
    let down_hi0 = PI - b - FRAC_PI_4;

    let mut run_min = f64::INFINITY;
    let mut run_max = f64::NEG_INFINITY;
    let mut flagged_up = false;
    let mut flagged_down = false;
    for k in first..traj.len() {
        let s = traj.s(k);
        if s >= 0.0 {
            break;
        }
        let z = traj.z(k);
        let dev = deviation(traj, k, c).unwrap_or(f64::NAN);
        if s > s_eff {
            report.checked_points += 1;
            report.max_deviation = report.max_deviation.max(dev.abs());
            if !(dev.abs() <= 0.125) {
                report.violations.push(BarrierViolation {
                    kind: ViolationKind::Pointwise,
                    index: k,
                    s,
                    z,
                    deviation: dev,
                });
            }
        }
        run_min = run_min.min(z);
        run_max = run_max.max(z);
        let ku = ((run_min - up_lo0) / TAU).ceil();
        if !flagged_up && up_hi0 + TAU * ku <= z {
            flagged_up = true;
            report.violations.push(BarrierViolation {
                kind: ViolationKind::Upward,
                index: k,
                s,
                z,
                deviation: dev,
            });
        }
        let kd = ((run_max - down_hi0) / TAU).floor();
        if !flagged_down && down_lo0 + TAU * kd >= z {
            flagged_down = true;
            report.violations.push(BarrierViolation {
                kind: ViolationKind::Downward,
                index: k,
                s,
                z,
                deviation: dev,
            });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSetReport {
    pub band_epsilon: f64,
    pub angular_bins: usize,
    pub coverage: f64,
    pub windings: f64,
    pub z_sup: f64,
    pub in_band_states: usize,
}

/// Bin of a lifted angle, counted across turns. Ties at interior bin edges
/// go to the lower bin; the edge at a multiple of 2π belongs to bin 0.
fn bin_of(x: f64, bins: usize) -> i64 {
    let turn = (x / TAU).floor();
    let r = crate::diffgeo::canonical_angle(x);
    let width = TAU / bins as f64;
    turn as i64 * bins as i64 + ((r / width).ceil() as i64 - 1).max(0)
}

/// Angular coverage of the band `|s| < band_epsilon`. Each pair of
/// consecutive in-band nodes marks every bin swept by the segment between
/// their lifted angles.
pub fn detect_omega_limit(
    traj: &FlowTrajectory,
    band_epsilon: f64,
    bins: usize,
) -> Result<LimitSetReport, FlowError> {
    assert!(bins > 0 && band_epsilon > 0.0);
    let in_band: Vec<usize> = (0..traj.len())
        .filter(|&k| traj.s(k).abs() < band_epsilon)
        .collect();
    if in_band.is_empty() {
        return Err(FlowError::InsufficientIntegration { band: band_epsilon });
    }
    let nb = bins as i64;
    let mut hit = vec![false; bins];
    let mut mark = |i: i64| hit[i.rem_euclid(nb) as usize] = true;
    for &k in &in_band {
        mark(bin_of(traj.t_canonical(k), bins));
    }
    for w in in_band.windows(2) {
        if w[1] != w[0] + 1 {
            continue;
        }
        let (a, b) = (traj.t_lift(w[0]), traj.t_lift(w[1]));
        let (lo, hi) = (a.min(b), a.max(b));
        if hi - lo >= TAU {
            (0..nb).for_each(&mut mark);
            continue;
        }
        for i in bin_of(lo, bins)..=bin_of(hi, bins) {
            mark(i);
        }
    }
    let covered = hit.iter().filter(|&&h| h).count();
    let first = *in_band.first().expect("nonempty");
    let last = *in_band.last().expect("nonempty");
    Ok(LimitSetReport {
        band_epsilon,
        angular_bins: bins,
        coverage: covered as f64 / bins as f64,
        windings: (traj.t_lift(last) - traj.t_lift(first)) / TAU,
        z_sup: track_z(traj),
        in_band_states: in_band.len(),
    })
}
