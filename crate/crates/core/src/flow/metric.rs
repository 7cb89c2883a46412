use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::diffgeo::MetricField;
use crate::linalg;

/// Recipe for a seeded smooth metric `g = LᵀL + μI` on an `(s, t, ...)`
/// chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMetricSpec {
    pub seed: u64,
    pub fourier_modes: usize,
    pub mu: f64,
    pub amplitude: f64,
    #[serde(default = "two")]
    pub dim: usize,
}

fn two() -> usize {
    2
}

impl RandomMetricSpec {
    pub fn new(seed: u64, fourier_modes: usize, mu: f64, amplitude: f64) -> Self {
        Self {
            seed,
            fourier_modes,
            mu,
            amplitude,
            dim: 2,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    cos: Vec<f64>,
    sin: Vec<f64>,
    omega: f64,
    phase: f64,
}

/// `L_{ij}(s, t) = σ · Σ_k (a_k cos kt + b_k sin kt) · cos(ω s + φ)`, with `σ`
/// chosen so that the eigenvalues of `g` stay in `[μ, μ + amp (1/μ − μ)]`.
#[derive(Debug, Clone)]
pub struct RandomMetric {
    spec: RandomMetricSpec,
    entries: Vec<Entry>,
    scale: f64,
}

impl RandomMetric {
    pub fn spec(&self) -> &RandomMetricSpec {
        &self.spec
    }

    fn factor(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.spec.dim;
        let (s, t) = (x[0], x[1]);
        DMatrix::from_fn(d, d, |i, j| {
            let e = &self.entries[i * d + j];
            let fourier: f64 = e
                .cos
                .iter()
                .zip(&e.sin)
                .enumerate()
                .map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin())
                .sum();
            self.scale * fourier * (e.omega * s + e.phase).cos()
        })
    }

    /// Smallest and largest eigenvalues over a tensor grid of the box
    /// `s ∈ s_range`, `t ∈ [0, 2π)`.
    pub fn eigen_range_on_grid(&self, s_range: (f64, f64), n_s: usize, n_t: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n_s {
            let s = s_range.0 + (s_range.1 - s_range.0) * i as f64 / (n_s.max(2) - 1) as f64;
            for j in 0..n_t {
                let t = std::f64::consts::TAU * j as f64 / n_t as f64;
                let mut x = vec![0.0; self.spec.dim];
                x[0] = s;
                x[1] = t;
                let (a, b) = linalg::symmetric_eigen_range(&self.metric(&x));
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        (lo, hi)
    }
}

impl MetricField for RandomMetric {
    fn dim(&self) -> usize {
        self.spec.dim
    }
    fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        let l = self.factor(x);
        let d = self.spec.dim;
        l.transpose() * l + DMatrix::identity(d, d) * self.spec.mu
    }
}

/// Builds the metric and verifies its eigenvalue bounds `[μ, 1/μ]` on a
/// 10 × 10 grid over `[-1, 0] × [0, 2π)`.
pub fn random_metric(spec: RandomMetricSpec) -> Result<RandomMetric, FlowError> {
    if !(spec.mu > 0.0 && spec.mu <= 1.0) || spec.amplitude < 0.0 || spec.dim < 2 {
        return Err(FlowError::SpecRejected(format!(
            "need mu in (0, 1], amplitude >= 0, dim >= 2; got {spec:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let mut entries = Vec::with_capacity(d * d);
    let mut bound_sq = 0.0;
    for _ in 0..d * d {
        let mut cos = Vec::with_capacity(spec.fourier_modes + 1);
        let mut sin = Vec::with_capacity(spec.fourier_modes + 1);
        for k in 0..=spec.fourier_modes {
            let decay = 1.0 / (1.0 + k as f64).powi(2);
            cos.push(rng.gen_range(-1.0..1.0) * decay);
            sin.push(if k == 0 {
                0.0
            } else {
                rng.gen_range(-1.0..1.0) * decay
            });
        }
        let omega = rng.gen_range(0.5..3.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let bound: f64 = cos.iter().chain(&sin).map(|c| c.abs()).sum();
        bound_sq += bound * bound;
        entries.push(Entry {
            cos,
            sin,
            omega,
            phase,
        });
    }
    // ‖L‖₂² ≤ ‖L‖_F² ≤ σ² Σ bound²
    let budget = spec.amplitude * (1.0 / spec.mu - spec.mu);
    let scale = if bound_sq > 0.0 {
        (budget / bound_sq).sqrt()
    } else {
        0.0
    };
    let metric = RandomMetric {
        spec,
        entries,
        scale,
    };
    let (lo, hi) = metric.eigen_range_on_grid((-1.0, 0.0), 10, 10);
    let tol = 1e-12;
    if lo < spec.mu - tol || hi > 1.0 / spec.mu + tol {
        return Err(FlowError::SpecRejected(format!(
            "eigenvalues [{lo}, {hi}] leave [{}, {}]",
            spec.mu,
            1.0 / spec.mu
        )));
    }
    Ok(metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_scaled_identity() {
        let m = random_metric(RandomMetricSpec::new(5, 3, 0.3, 0.0)).unwrap();
        let g = m.metric(&[-0.4, 2.0]);
        assert!((g - DMatrix::identity(2, 2) * 0.3).amax() == 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = random_metric(RandomMetricSpec::new(42, 3, 0.2, 1.0)).unwrap();
        let b = random_metric(RandomMetricSpec::new(42, 3, 0.2, 1.0)).unwrap();
        let c = random_metric(RandomMetricSpec::new(43, 3, 0.2, 1.0)).unwrap();
        for x in [[-0.3, 0.1], [-0.9, 5.0], [-0.01, 2.2]] {
            assert_eq!(a.metric(&x), b.metric(&x));
            assert_ne!(a.metric(&x), c.metric(&x));
        }
    }

    #[test]
    fn eigenvalues_within_bounds_on_grid() {
        for seed in 0..20 {
            let m = random_metric(RandomMetricSpec::new(seed, 3, 0.2, 1.0)).unwrap();
            let (lo, hi) = m.eigen_range_on_grid((-1.0, 0.0), 10, 10);
            assert!(
                lo >= 0.2 - 1e-12 && hi <= 5.0 + 1e-12,
                "seed {seed}: [{lo}, {hi}]"
            );
            // not degenerate: the metric actually varies
            assert!(hi > 0.25, "seed {seed}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(random_metric(RandomMetricSpec::new(1, 3, 0.0, 1.0)).is_err());
        assert!(random_metric(RandomMetricSpec::new(1, 3, 1.5, 1.0)).is_err());
        // amplitude beyond the certified budget can leave [μ, 1/μ]
        let big = random_metric(RandomMetricSpec::new(1, 3, 0.2, 50.0));
        if let Ok(m) = big {
            let (_, hi) = m.eigen_range_on_grid((-1.0, 0.0), 10, 10);
            assert!(hi <= 5.0 + 1e-12);
        }
    }
}
