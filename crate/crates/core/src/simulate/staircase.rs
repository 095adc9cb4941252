//! Completion-time model of the Staircase-code baseline.
//!
//! With parameter `k`, each worker is pre-assigned `b / (k - z)` blocks and
//! the master can decode from any `d >= k` workers having finished a
//! `(k - z) / (d - z)` share of their task, so
//! `T(k) = min_{d in k..=n} (k - z) / (d - z) * T_(d)` over the order
//! statistics of the whole-task times. `k` is then chosen to minimise.

use super::model::{self, SimConfig};
use crate::error::{domain, Result};

/// `min_{d in k..=n} (k - z)/(d - z) * sorted[d - 1]` for ascending `sorted`.
pub fn staircase_time(sorted: &[f64], k: usize, z: usize) -> Result<f64> {
    let n = sorted.len();
    if z >= k || k > n {
        return Err(domain(format!("need z < k <= n, got n={n}, k={k}, z={z}")));
    }
    Ok((k..=n)
        .map(|d| (k - z) as f64 / (d - z) as f64 * sorted[d - 1])
        .fold(f64::INFINITY, f64::min))
}

/// Staircase completion time of one trial and the `k` that achieves it.
///
/// Worker `i` needs `ceil(b / (k - z))` block computations, drawn from the
/// same service stream the adaptive schemes use, plus one packet round trip.
pub fn run_staircase(config: &SimConfig, trial_seed: u64) -> Result<(f64, usize)> {
    config.validate()?;
    let (n, z, b) = (config.n, config.z, config.b);
    let profiles = config.profiles(trial_seed)?;
    let unit = config.service_unit();
    let max_blocks = b;
    let mut prefix = Vec::with_capacity(n);
    let mut rtt = Vec::with_capacity(n);
    for (w, p) in profiles.iter().enumerate() {
        let mut rng = model::service_rng(trial_seed, w);
        let mut acc = 0.0;
        let mut sums = Vec::with_capacity(max_blocks + 1);
        sums.push(0.0);
        for _ in 0..max_blocks {
            acc += model::sample_packet_service(p, unit, &mut rng);
            sums.push(acc);
        }
        prefix.push(sums);
        let mut link = model::link_rng(trial_seed, w);
        rtt.push(
            model::sample_transmission(p, config.packet_bits(), &mut link)
                + model::sample_transmission(p, config.result_bits(), &mut link),
        );
    }
    let mut best = (f64::INFINITY, z + 1);
    for k in z + 1..=n {
        let blocks = b.div_ceil(k - z);
        let mut times: Vec<f64> = (0..n).map(|w| prefix[w][blocks] + rtt[w]).collect();
        times.sort_by(f64::total_cmp);
        let t = staircase_time(&times, k, z)?;
        if t < best.0 {
            best = (t, k);
        }
    }
    Ok(best)
}
