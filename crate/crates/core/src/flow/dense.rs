//! Quintic Hermite dense output. Each node carries `y`, `y'` and `y''`, so
//! the interpolant is C² and its derivative is accurate to `O(H⁵)` in the
//! node spacing `H`.

use nalgebra::DVector;

use super::ode::{OdeSolution, Rhs, RhsError};

#[derive(Debug, Clone)]
pub struct HermiteCurve {
    t: Vec<f64>,
    y: Vec<DVector<f64>>,
    dy: Vec<DVector<f64>>,
    ddy: Vec<DVector<f64>>,
}

// value basis and its derivative on [0, 1]
fn basis(u: f64) -> [f64; 6] {
    let (u2, u3) = (u * u, u * u * u);
    let (u4, u5) = (u3 * u, u3 * u2);
    [
        1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5,
        10.0 * u3 - 15.0 * u4 + 6.0 * u5,
        u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5,
        -4.0 * u3 + 7.0 * u4 - 3.0 * u5,
        0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5),
        0.5 * (u3 - 2.0 * u4 + u5),
    ]
}

fn basis_derivative(u: f64) -> [f64; 6] {
    let (u2, u3, u4) = (u * u, u * u * u, u * u * u * u);
    [
        -30.0 * u2 + 60.0 * u3 - 30.0 * u4,
        30.0 * u2 - 60.0 * u3 + 30.0 * u4,
        1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4,
        -12.0 * u2 + 28.0 * u3 - 15.0 * u4,
        0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4),
        0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4),
    ]
}

impl HermiteCurve {
    /// Nodes must be strictly monotone (either direction).
    pub fn new(
        t: Vec<f64>,
        y: Vec<DVector<f64>>,
        dy: Vec<DVector<f64>>,
        ddy: Vec<DVector<f64>>,
    ) -> Self {
        assert!(t.len() >= 2, "need at least two nodes");
        assert!(t.len() == y.len() && t.len() == dy.len() && t.len() == ddy.len());
        let (mut t, mut y, mut dy, mut ddy) = (t, y, dy, ddy);
        if t[1] < t[0] {
            t.reverse();
            y.reverse();
            dy.reverse();
            ddy.reverse();
        }
        assert!(
            t.windows(2).all(|w| w[1] > w[0]),
            "nodes must be strictly monotone"
        );
        Self { t, y, dy, ddy }
    }

    /// Builds the interpolant of an ODE solution of an autonomous system,
    /// estimating `y'' = Df(y) f(y)` by a central difference along `f`.
    pub fn from_solution(sol: &OdeSolution, f: &mut Rhs<'_>) -> Result<Self, RhsError> {
        let n = sol.t.len();
        let mut ddy = Vec::with_capacity(n);
        for k in 0..n {
            let fk = &sol.dy[k];
            let norm = fk.norm();
            if norm == 0.0 {
                ddy.push(DVector::zeros(fk.len()));
                continue;
            }
            let local = {
                let left = if k > 0 {
                    (sol.t[k] - sol.t[k - 1]).abs()
                } else {
                    f64::INFINITY
                };
                let right = if k + 1 < n {
                    (sol.t[k + 1] - sol.t[k]).abs()
                } else {
                    f64::INFINITY
                };
                left.min(right)
            };
            let eps = (1e-5 / norm).min(1e-2 * local);
            let fp = f(sol.t[k] + eps, &(&sol.y[k] + fk * eps))?;
            let fm = f(sol.t[k] - eps, &(&sol.y[k] - fk * eps))?;
            ddy.push((fp - fm) / (2.0 * eps));
        }
        Ok(Self::new(sol.t.clone(), sol.y.clone(), sol.dy.clone(), ddy))
    }

    /// Concatenates two curves sharing an end node (`left` ends where
    /// `right` starts); the shared node is taken from `right`.
    pub fn join(left: &HermiteCurve, right: &HermiteCurve) -> Self {
        let (_, l_end) = left.domain();
        let (r_start, _) = right.domain();
        assert!(
            (l_end - r_start).abs() <= 1e-12 * l_end.abs().max(1.0),
            "curves must share an end node"
        );
        let keep = left.t.len() - 1;
        let cat = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            a[..keep].iter().chain(b).cloned().collect::<Vec<_>>()
        };
        Self::new(
            left.t[..keep].iter().chain(&right.t).copied().collect(),
            cat(&left.y, &right.y),
            cat(&left.dy, &right.dy),
            cat(&left.ddy, &right.ddy),
        )
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().expect("nonempty"))
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = self.domain();
        t >= a && t <= b
    }

    pub fn nodes(&self) -> &[f64] {
        &self.t
    }

    pub fn node_values(&self) -> &[DVector<f64>] {
        &self.y
    }

    pub fn node_derivatives(&self) -> &[DVector<f64>] {
        &self.dy
    }

    fn locate(&self, t: f64) -> usize {
        let k = self.t.partition_point(|&x| x <= t);
        k.clamp(1, self.t.len() - 1) - 1
    }

    /// Interpolated state; `None` outside the node range.
    pub fn eval(&self, t: f64) -> Option<DVector<f64>> {
        if !self.contains(t) {
            return None;
        }
        let k = self.locate(t);
        let h = self.t[k + 1] - self.t[k];
        let w = basis((t - self.t[k]) / h);
        let mut out = &self.y[k] * w[0] + &self.y[k + 1] * w[1];
        out.axpy(h * w[2], &self.dy[k], 1.0);
        out.axpy(h * w[3], &self.dy[k + 1], 1.0);
        out.axpy(h * h * w[4], &self.ddy[k], 1.0);
        out.axpy(h * h * w[5], &self.ddy[k + 1], 1.0);
        Some(out)
    }

    /// Derivative of the interpolant; `None` outside the node range.
    pub fn eval_derivative(&self, t: f64) -> Option<DVector<f64>> {
        if !self.contains(t) {
            return None;
        }
        let k = self.locate(t);
        let h = self.t[k + 1] - self.t[k];
        let w = basis_derivative((t - self.t[k]) / h);
        let mut out = (&self.y[k] * w[0] + &self.y[k + 1] * w[1]) / h;
        out.axpy(w[2], &self.dy[k], 1.0);
        out.axpy(w[3], &self.dy[k + 1], 1.0);
        out.axpy(h * w[4], &self.ddy[k], 1.0);
        out.axpy(h * w[5], &self.ddy[k + 1], 1.0);
        Some(out)
    }
}
