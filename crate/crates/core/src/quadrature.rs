//! One-dimensional quadrature: fixed Gauss–Legendre rules and an adaptive
//! Gauss–Kronrod (7/15) integrator with user-supplied breakpoints.

use gauss_quad::GaussLegendre;

/// Gauss–Legendre rule of the given degree, reusable across intervals.
#[derive(Debug, Clone)]
pub struct LegendreRule {
    rule: GaussLegendre,
}

impl LegendreRule {
    pub fn new(degree: usize) -> Self {
        let rule = GaussLegendre::new(degree.try_into().expect("degree must be at least 2"));
        Self { rule }
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl FnMut(f64) -> f64) -> f64 {
        self.rule.integrate(a, b, f)
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let w = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + k as f64 * w;
                self.rule.integrate(lo, lo + w, &mut f)
            })
            .sum()
    }
}

// Kronrod 15-point nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(a: f64, b: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
    pub converged: bool,
}

/// Adaptive Gauss–Kronrod over `[a, b]`, first splitting at `breakpoints`
/// (sorted, inside the interval). Subdivides the interval with the largest
/// error estimate until the total estimate is below
/// `max(abs_tol, rel_tol·|value|)` or `max_intervals` is reached.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> QuadratureResult {
    let mut edges = vec![a];
    edges.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    let mut pieces: Vec<(f64, f64, f64, f64)> = edges
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(w[0], w[1], &mut f);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        let target = abs_tol.max(rel_tol * value.abs());
        if error <= target || pieces.len() >= max_intervals {
            return QuadratureResult {
                value,
                error_estimate: error,
                intervals: pieces.len(),
                converged: error <= target,
            };
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one interval");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(lo, mid, &mut f);
        let (v2, e2) = gk15(mid, hi, &mut f);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}
