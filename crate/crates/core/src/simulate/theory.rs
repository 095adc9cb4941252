//! Closed-form completion-time estimates.

use crate::error::{domain, Result};

fn sorted(betas: &[f64]) -> Vec<f64> {
    let mut v = betas.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `(b + eps) / sum_{i=z+1}^{n} 1/E[beta_i]` with workers sorted fastest
/// first: the `z` fastest hold keys and contribute nothing to decoding.
pub fn theorem3_estimate(expected_betas: &[f64], z: usize, b: usize, epsilon: f64) -> Result<f64> {
    let n = expected_betas.len();
    if z >= n {
        return Err(domain(format!("need z < n, got n={n}, z={z}")));
    }
    let rate: f64 = sorted(expected_betas)[z..].iter().map(|e| 1.0 / e).sum();
    Ok((b as f64 + epsilon) / rate)
}

/// `d*` minimising the Staircase estimate `b/(d - z) * E[beta_(d)]`.
pub fn staircase_dstar(expected_betas: &[f64], z: usize, b: usize) -> Result<usize> {
    let n = expected_betas.len();
    if z >= n {
        return Err(domain(format!("need z < n, got n={n}, z={z}")));
    }
    let s = sorted(expected_betas);
    let mut best = (f64::INFINITY, n);
    for d in z + 1..=n {
        let t = b as f64 / (d - z) as f64 * s[d - 1];
        if t < best.0 {
            best = (t, d);
        }
    }
    Ok(best.1)
}

/// Lower bound on `T_SC - T_PRAC`: `(b x - eps y) / (y (x + y))` with
/// `x = (n - d*) / E[beta_n]` and `y = (d* - z) / E[beta_d*]`, workers
/// sorted fastest first.
pub fn theorem4_bound(expected_betas: &[f64], z: usize, d_star: usize, b: usize, epsilon: f64) -> Result<f64> {
    let n = expected_betas.len();
    if d_star <= z || d_star > n {
        return Err(domain(format!("need z < d* <= n, got n={n}, z={z}, d*={d_star}")));
    }
    let s = sorted(expected_betas);
    let x = (n - d_star) as f64 / s[n - 1];
    let y = (d_star - z) as f64 / s[d_star - 1];
    Ok((b as f64 * x - epsilon * y) / (y * (x + y)))
}
