use serde::Serialize;

use super::cylinder::CylinderMap;
use super::PrequantError;
use crate::diffgeo::OneForm;
use crate::quadrature::LegendreRule;

const PANELS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct MassReport {
    pub s_grid: Vec<f64>,
    /// `∫_{S¹} v(s)*λ` for each grid value.
    pub mass_curve: Vec<f64>,
    /// Value at the grid point closest to the puncture (the last one).
    pub limit_estimate: f64,
    /// Change of the last value when the `t` quadrature is refined.
    pub refinement_change: f64,
    /// Most negative increment along the grid order.
    pub min_increment: f64,
}

impl MassReport {
    /// Nondecreasing in `s` within `slack`, whatever the grid direction.
    pub fn nondecreasing_in_s(&self, slack: f64) -> bool {
        self.s_grid
            .windows(2)
            .zip(self.mass_curve.windows(2))
            .all(|(s, m)| {
                let (lo, hi) = if s[1] >= s[0] {
                    (m[0], m[1])
                } else {
                    (m[1], m[0])
                };
                hi - lo >= -slack
            })
    }
}

fn loop_integral(
    map: &dyn CylinderMap,
    lambda: &dyn OneForm,
    rule: &LegendreRule,
    panels: usize,
    s: f64,
) -> Result<f64, PrequantError> {
    let mut bad = None;
    let v = rule.integrate_composite(0.0, 1.0, panels, |t| {
        match (map.eval(s, t), map.u_t(s, t)) {
            (Some((_, u)), Some(ut)) => lambda.eval(u.as_slice()).dot(&ut),
            _ => {
                bad = Some(t);
                f64::NAN
            }
        }
    });
    if let Some(t) = bad {
        return Err(PrequantError::Domain(format!(
            "map not defined at (s, t) = ({s}, {t})"
        )));
    }
    Ok(v)
}

/// Loop integrals `∫_{R/Z} λ(u_t) dt` along `s_grid`, ordered towards the
/// puncture. Each is a composite Gauss–Legendre rule in `t`, checked
/// against a rule with twice the panels.
pub fn puncture_mass(
    map: &dyn CylinderMap,
    lambda: &dyn OneForm,
    s_grid: &[f64],
) -> Result<MassReport, PrequantError> {
    if s_grid.is_empty() {
        return Err(PrequantError::Contract("empty s grid".into()));
    }
    let rule = LegendreRule::new(8);
    let mut mass_curve = Vec::with_capacity(s_grid.len());
    let mut refinement_change: f64 = 0.0;
    for &s in s_grid {
        let coarse = loop_integral(map, lambda, &rule, PANELS, s)?;
        let fine = loop_integral(map, lambda, &rule, 2 * PANELS, s)?;
        let change = (fine - coarse).abs();
        if change > 1e-10 * fine.abs().max(1.0) {
            return Err(PrequantError::Resolution(format!(
                "loop integral at s = {s} changed by {change:e} under refinement"
            )));
        }
        refinement_change = change;
        mass_curve.push(fine);
    }
    let min_increment = mass_curve
        .windows(2)
        .zip(s_grid.windows(2))
        .map(|(m, s)| {
            if s[1] >= s[0] {
                m[1] - m[0]
            } else {
                m[0] - m[1]
            }
        })
        .fold(f64::INFINITY, f64::min);
    Ok(MassReport {
        s_grid: s_grid.to_vec(),
        limit_estimate: *mass_curve.last().expect("nonempty"),
        mass_curve,
        refinement_change,
        min_increment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prequant::cylinder::{build_cylinder, CylinderOptions, FiberPerturbation};
    use crate::prequant::models::{arctan_space, constant_space};
    use std::f64::consts::{FRAC_PI_2, TAU};

    #[test]
    fn trivial_cylinder_has_constant_mass() {
        let c = 0.3;
        let space = constant_space(c);
        let cyl = build_cylinder(
            &space,
            &[0.2, 0.1],
            (-2.0, 2.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..9).map(|k| -2.0 + 0.5 * k as f64).collect();
        let r = puncture_mass(&cyl, space.lambda_f().as_ref(), &grid).unwrap();
        for m in &r.mass_curve {
            assert!((m - TAU * c.exp()).abs() < 1e-12);
        }
        assert!(r.nondecreasing_in_s(1e-12));
    }

    #[test]
    fn arctan_mass_is_increasing_towards_two_pi_e_half_pi() {
        let space = arctan_space();
        let cyl = build_cylinder(
            &space,
            &[0.0, 0.0],
            (-10.0, 200.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let grid: Vec<f64> = (0..=20).map(|k| 10.0 * k as f64).collect();
        let r = puncture_mass(&cyl, space.lambda_f().as_ref(), &grid).unwrap();
        assert!(r.nondecreasing_in_s(1e-8) && r.min_increment > 0.0);
        assert!(r.limit_estimate < TAU * FRAC_PI_2.exp());
        assert!(r.limit_estimate > 0.9 * TAU * FRAC_PI_2.exp());
        // default finite-difference u_t agrees with the exact one
        let fd = FiberPerturbation {
            inner: &cyl,
            amplitude: 0.0,
        };
        let r2 = puncture_mass(&fd, space.lambda_f().as_ref(), &grid).unwrap();
        assert!((r2.limit_estimate - r.limit_estimate).abs() < 1e-8);
    }

    #[test]
    fn grid_outside_the_cylinder_is_a_domain_error() {
        let space = constant_space(0.0);
        let cyl = build_cylinder(
            &space,
            &[0.0, 0.0],
            (-1.0, 1.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        assert!(matches!(
            puncture_mass(&cyl, space.lambda_f().as_ref(), &[0.0, 2.0]),
            Err(PrequantError::Domain(_))
        ));
    }
}
