use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cylinder::CylinderMap;
use super::PrequantError;
use crate::diffgeo::ContactData;

/// Uniform sample grid: `n_s` values spanning `s_range` (endpoints
/// included) times `n_t` values `k/n_t` on the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    pub s_range: (f64, f64),
    pub n_s: usize,
    pub n_t: usize,
}

impl ResidualGrid {
    pub fn s_values(&self) -> Vec<f64> {
        let (lo, hi) = self.s_range;
        if self.n_s == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..self.n_s)
            .map(|i| lo + (hi - lo) * i as f64 / (self.n_s - 1) as f64)
            .collect()
    }

    pub fn t_values(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| k as f64 / self.n_t as f64).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// Largest `|π du∘j − J π du|` over the grid and the two frame vectors.
    #[serde(rename = "max_R1")]
    pub max_r1: f64,
    /// Largest `|u*λ∘j − da|`.
    #[serde(rename = "max_R2")]
    pub max_r2: f64,
    pub h: f64,
    pub grid: ResidualGrid,
    /// Where the combined residual peaks.
    pub argmax: (f64, f64),
    /// `max_residual(h) / max_residual(h/2)`, filled in by [`residual_refinement`].
    pub refinement_ratio: Option<f64>,
    /// `log₂` of the refinement ratio.
    pub order_estimate: Option<f64>,
}

impl ResidualReport {
    /// The larger of the two component maxima.
    pub fn max_residual(&self) -> f64 {
        self.max_r1.max(self.max_r2)
    }
}

fn eval_or_domain(
    map: &dyn CylinderMap,
    s: f64,
    t: f64,
) -> Result<(f64, DVector<f64>), PrequantError> {
    map.eval(s, t)
        .ok_or_else(|| PrequantError::Domain(format!("map not defined at (s, t) = ({s}, {t})")))
}

/// Cauchy–Riemann residual of `ũ = (a, u)` for the cylinder structure
/// `(λ, J)` given by `contact`, with all derivatives taken by central
/// differences of step `h`.
pub fn holomorphy_residual(
    map: &dyn CylinderMap,
    contact: &ContactData,
    grid: &ResidualGrid,
    h: f64,
) -> Result<ResidualReport, PrequantError> {
    if !(h > 0.0) || grid.n_s == 0 || grid.n_t == 0 {
        return Err(PrequantError::Contract(format!(
            "invalid residual grid {grid:?} or step {h}"
        )));
    }
    if map.target_dim() != contact.dim() {
        return Err(PrequantError::Contract(format!(
            "map target dimension {} does not match contact dimension {}",
            map.target_dim(),
            contact.dim()
        )));
    }
    let (lo, hi) = map.s_range();
    let (g0, g1) = grid.s_range;
    if g0 - h < lo || g1 + h > hi {
        return Err(PrequantError::Domain(format!(
            "grid [{g0}, {g1}] widened by h = {h} leaves the map range [{lo}, {hi}]"
        )));
    }

    let (mut max_r1, mut max_r2, mut best, mut argmax) = (0.0_f64, 0.0_f64, -1.0_f64, (g0, 0.0));
    for s in grid.s_values() {
        for t in grid.t_values() {
            let (_, u) = eval_or_domain(map, s, t)?;
            let (a_sp, u_sp) = eval_or_domain(map, s + h, t)?;
            let (a_sm, u_sm) = eval_or_domain(map, s - h, t)?;
            let (a_tp, u_tp) = eval_or_domain(map, s, t + h)?;
            let (a_tm, u_tm) = eval_or_domain(map, s, t - h)?;
            let u_s = (u_sp - u_sm) / (2.0 * h);
            let u_t = (u_tp - u_tm) / (2.0 * h);
            let a_s = (a_sp - a_sm) / (2.0 * h);
            let a_t = (a_tp - a_tm) / (2.0 * h);

            let fr = contact.frame(u.as_slice())?;
            let pu_s = &fr.projection * &u_s;
            let pu_t = &fr.projection * &u_t;
            // j∂_s = ∂_t, j∂_t = −∂_s
            let r1_s = (&pu_t - &fr.j * &pu_s).norm();
            let r1_t = (-&pu_s - &fr.j * &pu_t).norm();
            let r2_s = (fr.lambda.dot(&u_t) - a_s).abs();
            let r2_t = (-fr.lambda.dot(&u_s) - a_t).abs();
            let (r1, r2) = (r1_s.max(r1_t), r2_s.max(r2_t));
            if !(r1.is_finite() && r2.is_finite()) {
                return Err(PrequantError::Evaluation(format!(
                    "non-finite residual at (s, t) = ({s}, {t})"
                )));
            }
            max_r1 = max_r1.max(r1);
            max_r2 = max_r2.max(r2);
            if r1 + r2 > best {
                best = r1 + r2;
                argmax = (s, t);
            }
        }
    }
    Ok(ResidualReport {
        max_r1,
        max_r2,
        h,
        grid: *grid,
        argmax,
        refinement_ratio: None,
        order_estimate: None,
    })
}

/// Residual at `h` with the ratio against `h/2` recorded. For a map that
/// is holomorphic up to the accuracy of its construction, the
/// central-difference error dominates and the ratio is close to 4.
pub fn residual_refinement(
    map: &dyn CylinderMap,
    contact: &ContactData,
    grid: &ResidualGrid,
    h: f64,
) -> Result<ResidualReport, PrequantError> {
    let mut coarse = holomorphy_residual(map, contact, grid, h)?;
    let fine = holomorphy_residual(map, contact, grid, 0.5 * h)?;
    let ratio = coarse.max_residual() / fine.max_residual();
    coarse.refinement_ratio = Some(ratio);
    coarse.order_estimate = Some(ratio.log2());
    Ok(coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prequant::cylinder::{build_cylinder, CylinderOptions, FiberPerturbation};
    use crate::prequant::models::{arctan_space, constant_space};

    fn tight() -> CylinderOptions {
        CylinderOptions {
            rtol: 1e-12,
            atol: 1e-14,
            h_max: 0.01,
            ..CylinderOptions::default()
        }
    }

    #[test]
    fn trivial_cylinder_is_holomorphic() {
        let space = constant_space(0.7);
        let cyl = build_cylinder(
            &space,
            &[0.3, -0.2],
            (-1.0, 1.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let grid = ResidualGrid {
            s_range: (-0.5, 0.5),
            n_s: 11,
            n_t: 8,
        };
        let r = holomorphy_residual(&cyl, &space.contact(), &grid, 1e-4).unwrap();
        assert!(r.max_residual() < 1e-10, "{r:?}");
    }

    #[test]
    fn arctan_cylinder_residual_is_second_order() {
        let space = arctan_space();
        let cyl = build_cylinder(&space, &[0.0, 0.0], (-1.0, 1.0), &tight()).unwrap();
        let grid = ResidualGrid {
            s_range: (-0.5, 0.5),
            n_s: 21,
            n_t: 8,
        };
        let r = residual_refinement(&cyl, &space.contact(), &grid, 1e-4).unwrap();
        assert!(r.max_residual() <= 1e-6 && r.max_r1 > 0.0, "{r:?}");
        let ratio = r.refinement_ratio.unwrap();
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        let json = serde_json::to_value(&r).unwrap();
        for key in ["max_R1", "max_R2", "h", "grid", "order_estimate"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn perturbed_cylinder_is_detected() {
        let space = arctan_space();
        let cyl = build_cylinder(&space, &[0.0, 0.0], (-1.0, 1.0), &tight()).unwrap();
        let bad = FiberPerturbation {
            inner: &cyl,
            amplitude: 0.1,
        };
        let grid = ResidualGrid {
            s_range: (-0.5, 0.5),
            n_s: 5,
            n_t: 8,
        };
        let r = holomorphy_residual(&bad, &space.contact(), &grid, 1e-4).unwrap();
        assert!(r.max_residual() > 0.05, "{r:?}");
    }

    #[test]
    fn grid_touching_the_edge_is_a_domain_error() {
        let space = constant_space(0.0);
        let cyl = build_cylinder(
            &space,
            &[0.0, 0.0],
            (-1.0, 1.0),
            &CylinderOptions::default(),
        )
        .unwrap();
        let grid = ResidualGrid {
            s_range: (-1.0, 0.0),
            n_s: 3,
            n_t: 2,
        };
        assert!(matches!(
            holomorphy_residual(&cyl, &space.contact(), &grid, 1e-4),
            Err(PrequantError::Domain(_))
        ));
    }
}
