use std::f64::consts::TAU;

/// A point in a coordinate chart where some coordinates are angles mod 2π.
///
/// The stored value of an angular coordinate is its continuous lift; the
/// canonical representative in `[0, 2π)` is always derived from it, never the
/// other way round. Integrators therefore advance lifts and winding numbers
/// come for free.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    coords: Vec<f64>,
    angular: Vec<usize>,
}

impl ChartPoint {
    /// Builds a point from lifted coordinates. Indices in `angular` must be in
    /// range and are deduplicated.
    pub fn new(coords: Vec<f64>, mut angular: Vec<usize>) -> Self {
        angular.sort_unstable();
        angular.dedup();
        assert!(
            angular.iter().all(|&i| i < coords.len()),
            "angular index out of range"
        );
        Self { coords, angular }
    }

    pub fn euclidean(coords: Vec<f64>) -> Self {
        Self {
            coords,
            angular: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Lifted coordinates, suitable for evaluating periodic fields.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn angular_indices(&self) -> &[usize] {
        &self.angular
    }

    pub fn is_angular(&self, i: usize) -> bool {
        self.angular.binary_search(&i).is_ok()
    }

    pub fn lift(&self, i: usize) -> f64 {
        self.coords[i]
    }

    /// Canonical representative; angles land in `[0, 2π)`.
    pub fn canonical(&self, i: usize) -> f64 {
        if self.is_angular(i) {
            canonical_angle(self.coords[i])
        } else {
            self.coords[i]
        }
    }

    pub fn canonical_coords(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.canonical(i)).collect()
    }

    /// Number of full turns separating the lift from its representative.
    pub fn winding(&self, i: usize) -> i64 {
        ((self.coords[i] - self.canonical(i)) / TAU).round() as i64
    }

    /// Same chart structure, new lifted coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), self.coords.len());
        Self {
            coords,
            angular: self.angular.clone(),
        }
    }
}

/// Reduces an angle into `[0, 2π)`.
pub fn canonical_angle(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Unwraps a sequence of angles (canonical or otherwise) into a continuous
/// lift, assuming consecutive samples differ by less than π.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (k, &a) in angles.iter().enumerate() {
        if k > 0 {
            let prev = angles[k - 1];
            let jump = a - prev;
            offset -= TAU * (jump / TAU).round();
        }
        out.push(a + offset);
    }
    out
}
