//! Seeded discrete-event simulation of the protocol and its baselines, and
//! the closed-form estimates they are compared with.
//!
//! Per-worker service times are shifted exponentials with rate `lambda_i`
//! and shift `c_i = 1 / lambda_i`; link rates are Poisson with a per-worker
//! mean capacity. Service and link draws come from separate per-worker
//! streams of the trial seed, so two schemes run on the same trial see the
//! same delays.

mod batch;
mod engine;
mod model;
mod staircase;
mod theory;

pub use batch::{
    batch, bootstrap_mean_quantile, honest_workers, paired_le, run_trial, trial_seed, write_csv,
    BatchResult, CompletionRecord, Scheme, Summary, TrialResult, CSV_HEADER,
};
pub use engine::{check_causality, check_gating, run_adaptive, trial_data, GatingViolation, Outcome, TraceEvent};
pub use model::{
    link_rng, mix_seed, sample_packet_service, sample_transmission, service_rng, AdversaryRule, C3pWorkers,
    Scenario, ServiceScale, SimConfig, WorkerProfile,
};
pub use staircase::{run_staircase, staircase_time};
pub use theory::{staircase_dstar, theorem3_estimate, theorem4_bound};

/// Per-packet mean service times of a config's workers, in worker order.
pub fn expected_betas(config: &SimConfig, trial_seed: u64) -> crate::Result<Vec<f64>> {
    Ok(config
        .profiles(trial_seed)?
        .iter()
        .map(|p| config.expected_service(p))
        .collect())
}
