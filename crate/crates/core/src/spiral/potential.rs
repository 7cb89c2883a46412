use std::f64::consts::FRAC_PI_4;
use std::f64::consts::SQRT_2;

use super::cutoff::BumpStep;
use crate::diffgeo::GeometryError;

/// Default offset constant in `G`.
pub const DEFAULT_C: f64 = 1.25;

/// Parameters of `F_δ`: the plateau width δ, the cutoff shape and the
/// constant `c` in `G`, which must lie in `(1, √2)`.
#[derive(Debug, Clone)]
pub struct SpiralParams {
    pub delta: f64,
    pub c: f64,
    step: BumpStep,
}

impl SpiralParams {
    pub fn new(delta: f64) -> Self {
        Self::with_shape(delta, 1.0, DEFAULT_C)
    }

    pub fn with_shape(delta: f64, cutoff_sharpness: f64, c: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        assert!(c > 1.0 && c < SQRT_2, "c must lie in (1, sqrt 2)");
        Self {
            delta,
            c,
            step: BumpStep::new(cutoff_sharpness),
        }
    }

    pub fn cutoff_sharpness(&self) -> f64 {
        self.step.sharpness()
    }

    /// `c - 1/8`: below this `√2 sin(z + π/4)` blocks upward motion of z.
    pub fn lower_barrier(&self) -> f64 {
        self.c - 0.125
    }

    /// `c + 1/8`: above this `√2 sin(z + π/4)` blocks downward motion of z.
    pub fn upper_barrier(&self) -> f64 {
        self.c + 0.125
    }

    fn x_of(&self, s: f64) -> f64 {
        (s + self.delta) / (0.5 * self.delta)
    }
}

/// `η(s)`: 0 for `s ≤ -δ`, 1 for `s ≥ -δ/2`, smooth and nondecreasing.
pub fn eval_eta(s: f64, params: &SpiralParams) -> f64 {
    params.step.value(params.x_of(s))
}

pub fn eta_derivative(s: f64, params: &SpiralParams) -> f64 {
    params.step.derivative(params.x_of(s)) * 2.0 / params.delta
}

/// `G(s, t) = e^{1/s}(sin(1/s + t) - c)` for `s < 0`, and 0 otherwise.
///
/// For `s > -1/745` the exponential underflows and the result is exactly 0,
/// which is below machine resolution of the true value anyway.
pub fn eval_g_with(s: f64, t: f64, c: f64) -> f64 {
    if s >= 0.0 {
        return 0.0;
    }
    let e = (1.0 / s).exp();
    if e == 0.0 {
        return 0.0;
    }
    e * ((1.0 / s + t).sin() - c)
}

pub fn eval_g(s: f64, t: f64) -> f64 {
    eval_g_with(s, t, DEFAULT_C)
}

/// `(G_s, G_t)` in closed form; only defined for `s < 0`.
pub fn grad_g_with(s: f64, t: f64, c: f64) -> Result<(f64, f64), GeometryError> {
    if !(s < 0.0) {
        return Err(GeometryError::EvaluationDomain(format!(
            "dG needs s < 0, got s = {s}"
        )));
    }
    Ok(grad_g_unchecked(s, t, c))
}

pub fn grad_g(s: f64, t: f64) -> Result<(f64, f64), GeometryError> {
    grad_g_with(s, t, DEFAULT_C)
}

fn grad_g_unchecked(s: f64, t: f64, c: f64) -> (f64, f64) {
    let e = (1.0 / s).exp();
    if e == 0.0 {
        return (0.0, 0.0);
    }
    let phase = 1.0 / s + t;
    let gs = -e / (s * s) * (SQRT_2 * (phase + FRAC_PI_4).sin() - c);
    let gt = e * phase.cos();
    (gs, gt)
}

/// `F_δ = (1 - η) s + η G`.
pub fn eval_f_delta(s: f64, t: f64, params: &SpiralParams) -> f64 {
    if s >= 0.0 {
        return 0.0;
    }
    let eta = eval_eta(s, params);
    if eta == 0.0 {
        return s;
    }
    (1.0 - eta) * s + eta * eval_g_with(s, t, params.c)
}

/// `dF_δ = (η'(G - s) + (1 - η) + η G_s) ds + η G_t dt`.
pub fn d_f_delta(s: f64, t: f64, params: &SpiralParams) -> (f64, f64) {
    if s >= 0.0 {
        return (0.0, 0.0);
    }
    let eta = eval_eta(s, params);
    if eta == 0.0 {
        return (1.0, 0.0);
    }
    let g = eval_g_with(s, t, params.c);
    let (gs, gt) = grad_g_unchecked(s, t, params.c);
    let deta = eta_derivative(s, params);
    (deta * (g - s) + (1.0 - eta) + eta * gs, eta * gt)
}

/// `dF_δ(s² ∂_s + ∂_t)`, positive wherever `s < 0`.
pub fn critical_bound(s: f64, t: f64, params: &SpiralParams) -> f64 {
    let (fs, ft) = d_f_delta(s, t, params);
    s * s * fs + ft
}

/// [`critical_bound`] as `(m, k)` with value `m·e^k`. Where `η = 1` the
/// bound carries the factor `e^{1/s}`, which underflows for `s > −1/745`;
/// there `k = 1/s` and `m` is assembled from `e^{−1/s}G`, `e^{−1/s}G_s` and
/// `e^{−1/s}G_t`, so the sign of `m` stays meaningful up to `s → 0⁻`.
pub fn critical_bound_scaled(s: f64, t: f64, params: &SpiralParams) -> (f64, f64) {
    if s >= 0.0 || eval_eta(s, params) < 1.0 {
        return (critical_bound(s, t, params), 0.0);
    }
    let phase = 1.0 / s + t;
    let gs = -(SQRT_2 * (phase + FRAC_PI_4).sin() - params.c) / (s * s);
    let gt = phase.cos();
    (s * s * gs + gt, 1.0 / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn fd2(f: impl Fn(f64, f64) -> f64, s: f64, t: f64, h: f64) -> (f64, f64) {
        (
            (f(s + h, t) - f(s - h, t)) / (2.0 * h),
            (f(s, t + h) - f(s, t - h)) / (2.0 * h),
        )
    }

    #[test]
    fn eta_plateaus_and_monotone_middle() {
        let p = SpiralParams::new(0.4);
        assert_eq!(eval_eta(-0.8, &p), 0.0);
        assert_eq!(eval_eta(0.0, &p), 1.0);
        let mid = eval_eta(-0.3, &p);
        assert!(mid > 0.0 && mid < 1.0);
        assert!(eval_eta(-0.3 + 0.004, &p) > eval_eta(-0.3 - 0.004, &p));
    }

    #[test]
    fn g_reference_values() {
        assert_eq!(eval_g(0.5, 1.3), 0.0);
        assert!((eval_g(-0.25, 0.0) - (-0.009_033_3)).abs() < 1e-6);
        let v = eval_g(-1.0, 0.0);
        assert!((v + 0.769_409_18).abs() < 1e-6);
        assert!(v >= -2.25 * (-1f64).exp() && v < -0.25 * (-1f64).exp());
    }

    #[test]
    fn g_partials_reference_values() {
        let (gs, gt) = grad_g(-1.0, 0.0).unwrap();
        assert!((gs - 0.5707).abs() < 1e-3);
        assert!((gt - 0.1988).abs() < 1e-3);
        assert!((gs + gt - 0.769_409_18).abs() < 1e-6);
        assert!(grad_g(0.0, 1.0).is_err());
        let (fs, ft) = fd2(eval_g, -0.5, PI, 1e-6);
        let (gs, gt) = grad_g(-0.5, PI).unwrap();
        assert!((fs - gs).abs() < 1e-6 && (ft - gt).abs() < 1e-6);
    }

    #[test]
    fn f_delta_branches() {
        let p = SpiralParams::new(1.0);
        assert_eq!(eval_f_delta(-2.0, 0.7, &p), -2.0);
        assert_eq!(eval_f_delta(1.0, 0.7, &p), 0.0);
        assert!((eval_f_delta(-0.25, 0.0, &p) - eval_g(-0.25, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn scaled_bound_matches_and_survives_underflow() {
        let p = SpiralParams::new(1.0);
        for &(s, t) in &[(-0.9, 1.0), (-0.4, 2.0), (-0.05, 0.3), (-0.01, 5.0)] {
            let (m, k) = critical_bound_scaled(s, t, &p);
            let direct = critical_bound(s, t, &p);
            assert!(
                (m * k.exp() - direct).abs() <= 1e-12 * direct.abs().max(1e-300),
                "{s}"
            );
        }
        for &t in &[0.0, 1.0, 4.0] {
            assert_eq!(critical_bound(-1e-3, t, &p), 0.0);
            let (m, k) = critical_bound_scaled(-1e-3, t, &p);
            assert!(m > 0.0 && k == -1000.0);
            // m = c − sin(1/s + t)
            assert!((m - (p.c - (-1000.0 + t).sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn critical_bound_reference_values() {
        let p = SpiralParams::new(0.5);
        assert!((critical_bound(-1.0, 2.0, &p) - 1.0).abs() < 1e-15);
        let p = SpiralParams::new(1.0);
        assert!((critical_bound(-0.25, 0.0, &p) - 0.009_033_3).abs() < 1e-6);
    }

    #[test]
    fn differential_is_second_order() {
        let p = SpiralParams::new(1.0);
        let f = |s: f64, t: f64| eval_f_delta(s, t, &p);
        for &(s, t) in &[(-0.9, 0.3), (-0.7, 2.0), (-0.55, 5.1), (-0.3, 1.0)] {
            let exact = d_f_delta(s, t, &p);
            let e1 = {
                let a = fd2(f, s, t, 1e-3);
                (a.0 - exact.0).abs().max((a.1 - exact.1).abs())
            };
            let e2 = {
                let a = fd2(f, s, t, 5e-4);
                (a.0 - exact.0).abs().max((a.1 - exact.1).abs())
            };
            let ratio = e1 / e2;
            assert!((3.5..=4.5).contains(&ratio), "({s},{t}): ratio {ratio}");
        }
    }

    proptest! {
        #[test]
        fn bounds_on_f(s in -5.0f64..-1e-3, t in 0.0f64..(2.0 * PI)) {
            let p = SpiralParams::new(1.0);
            let f = eval_f_delta(s, t, &p);
            prop_assert!(s <= f);
            prop_assert!(f <= -0.25 * (1.0 / s).exp() + 1e-15);
        }

        #[test]
        fn directional_identity(s in -5.0f64..-1e-2, t in -10.0f64..10.0) {
            let (gs, gt) = grad_g(s, t).unwrap();
            prop_assert!((s * s * gs + gt + eval_g(s, t)).abs() <= 1e-10);
        }
    }
}
