use crate::quadrature::LegendreRule;

const PANELS: usize = 6;
const DEGREE: usize = 24;

/// Smooth monotone step `B: R -> [0, 1]`, `B = 0` on `(-inf, 0]`,
/// `B = 1` on `[1, inf)`, built as the normalized integral of the bump
/// `exp(-k / (u (1 - u)))`.
#[derive(Debug, Clone)]
pub struct BumpStep {
    sharpness: f64,
    norm: f64,
    rule: LegendreRule,
}

impl BumpStep {
    pub fn new(sharpness: f64) -> Self {
        assert!(sharpness > 0.0, "sharpness must be positive");
        let mut step = Self {
            sharpness,
            norm: 1.0,
            rule: LegendreRule::new(DEGREE),
        };
        step.norm = step.raw_integral(0.0, 1.0);
        step
    }

    pub fn sharpness(&self) -> f64 {
        self.sharpness
    }

    fn bump(&self, u: f64) -> f64 {
        if u <= 0.0 || u >= 1.0 {
            0.0
        } else {
            (-self.sharpness / (u * (1.0 - u))).exp()
        }
    }

    fn raw_integral(&self, a: f64, b: f64) -> f64 {
        self.rule
            .integrate_composite(a, b, PANELS, |u| self.bump(u))
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else if x <= 0.5 {
            (self.raw_integral(0.0, x) / self.norm).clamp(0.0, 1.0)
        } else {
            // integrate the short side so both plateaus are approached exactly
            (1.0 - self.raw_integral(x, 1.0) / self.norm).clamp(0.0, 1.0)
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.bump(x) / self.norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_and_symmetry() {
        let b = BumpStep::new(1.0);
        assert_eq!(b.value(-0.1), 0.0);
        assert_eq!(b.value(1.3), 1.0);
        assert!((b.value(0.5) - 0.5).abs() < 1e-14);
        for x in [0.1, 0.27, 0.4] {
            assert!((b.value(x) + b.value(1.0 - x) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let b = BumpStep::new(1.0);
        let h = 1e-5;
        for x in [0.05, 0.2, 0.5, 0.71, 0.93] {
            let fd = (b.value(x + h) - b.value(x - h)) / (2.0 * h);
            assert!((fd - b.derivative(x)).abs() < 1e-8, "x={x}");
        }
    }
}
