//! Wedge powers evaluated on coordinate bases by explicit antisymmetrized
//! expansion. Dimensions never exceed 7 here, so summing over all
//! permutations (at most 5040) is exact and cheap.

use nalgebra::DMatrix;

/// All permutations of `0..m` paired with their signs (Heap's algorithm).
fn signed_permutations(m: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..m).collect();
    let mut counters = vec![0usize; m];
    let mut sign = 1.0;
    out.push((perm.clone(), sign));
    let mut i = 0;
    while i < m {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            sign = -sign;
            out.push((perm.clone(), sign));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    out
}

/// `ω^n(∂_0, …, ∂_{2n-1})` for a 2-form given as an antisymmetric `2n × 2n`
/// matrix, with the determinant normalization `(dx∧dy)(∂_x, ∂_y) = 1`.
pub fn two_form_power_volume(omega: &DMatrix<f64>, n: usize) -> f64 {
    let m = 2 * n;
    assert_eq!(
        omega.nrows(),
        m,
        "two-form must act on a 2n-dimensional space"
    );
    if n == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for (perm, sign) in signed_permutations(m) {
        let mut prod = sign;
        for k in 0..n {
            prod *= omega[(perm[2 * k], perm[2 * k + 1])];
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    total / 2f64.powi(n as i32)
}

/// `(λ ∧ ω^n)(∂_0, …, ∂_{2n})` for a covector `λ` and an antisymmetric
/// `(2n+1) × (2n+1)` matrix `ω`.
pub fn contact_wedge_volume(lambda: &[f64], omega: &DMatrix<f64>, n: usize) -> f64 {
    let m = 2 * n + 1;
    assert_eq!(lambda.len(), m);
    assert_eq!(omega.nrows(), m);
    let mut total = 0.0;
    for (perm, sign) in signed_permutations(m) {
        let mut prod = sign * lambda[perm[0]];
        if prod == 0.0 {
            continue;
        }
        for k in 0..n {
            prod *= omega[(perm[2 * k + 1], perm[2 * k + 2])];
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
    }
    total / 2f64.powi(n as i32)
}
