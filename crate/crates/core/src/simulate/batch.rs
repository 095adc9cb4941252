//! Schemes, per-trial records, batches and summary statistics.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::engine::{self, Outcome};
use super::model::{self, AdversaryRule, C3pWorkers, SimConfig, ADVERSARY_STREAM};
use super::staircase;
use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Prac,
    Staircase,
    C3p,
    Gc3p,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Prac, Scheme::Staircase, Scheme::C3p, Scheme::Gc3p];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Prac => "PRAC",
            Scheme::Staircase => "Staircase",
            Scheme::C3p => "C3P",
            Scheme::Gc3p => "GC3P",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "prac" => Ok(Scheme::Prac),
            "staircase" => Ok(Scheme::Staircase),
            "c3p" => Ok(Scheme::C3p),
            "gc3p" => Ok(Scheme::Gc3p),
            _ => Err(domain(format!("unknown scheme {s:?}"))),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionRecord {
    pub scheme: &'static str,
    pub n: usize,
    pub z: usize,
    pub b: usize,
    pub m: usize,
    pub ell: usize,
    pub scenario: String,
    pub adversary_rule: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub completion_time_s: f64,
    pub packets_sent: usize,
    pub epsilon_observed: usize,
}

/// Seed of trial `trial`. With `paired` every scheme gets the same seed and
/// hence the same worker delays.
pub fn trial_seed(base: u64, scheme: Scheme, trial: usize, paired: bool) -> u64 {
    let salt = if paired { 0 } else { scheme as u64 + 1 };
    model::mix_seed(model::mix_seed(base, salt), trial as u64)
}

/// Workers GC3P keeps: all but the `z` chosen as adversaries.
pub fn honest_workers(config: &SimConfig, trial_seed: u64) -> Result<Vec<usize>> {
    let lambdas = config.lambdas()?;
    let mut order: Vec<usize> = (0..config.n).collect();
    match config.adversary_rule {
        // Ascending rate: slowest first. Stable sort keeps index order on ties.
        AdversaryRule::Slowest => order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b])),
        AdversaryRule::Fastest => order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a])),
        AdversaryRule::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            rng.set_stream(ADVERSARY_STREAM);
            order.shuffle(&mut rng);
        }
    }
    let mut keep = order.split_off(config.z);
    keep.sort_unstable();
    Ok(keep)
}

/// Completion time, packets sent and observed overhead of one trial.
pub struct TrialResult {
    pub completion_time: f64,
    pub packets_sent: usize,
    pub epsilon: usize,
    pub outcome: Option<Outcome>,
}

/// Run one trial of `scheme` with the given trial seed.
pub fn run_trial(config: &SimConfig, scheme: Scheme, seed: u64, record_trace: bool) -> Result<TrialResult> {
    config.validate()?;
    let adaptive = |active: Vec<usize>, z: usize| -> Result<TrialResult> {
        let o = engine::run_adaptive(config, seed, &active, z, record_trace)?;
        if !o.is_correct() {
            return Err(Error::Integrity(format!("{} decoded a wrong product", scheme.label())));
        }
        Ok(TrialResult {
            completion_time: o.completion_time,
            packets_sent: o.packets_sent,
            epsilon: o.epsilon,
            outcome: Some(o),
        })
    };
    match scheme {
        Scheme::Prac => adaptive((0..config.n).collect(), config.z),
        Scheme::C3p => match config.c3p_workers {
            C3pWorkers::All => adaptive((0..config.n).collect(), 0),
            C3pWorkers::NMinusZ => adaptive((0..config.n - config.z).collect(), 0),
        },
        Scheme::Gc3p => adaptive(honest_workers(config, seed)?, 0),
        Scheme::Staircase => {
            let (t, k) = staircase::run_staircase(config, seed)?;
            log::trace!("staircase trial seed {seed}: k = {k}");
            Ok(TrialResult {
                completion_time: t,
                packets_sent: config.n,
                epsilon: 0,
                outcome: None,
            })
        }
    }
}

/// Mean with its spread.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_err: f64,
    /// Half-width of the two-sided 95% Student-t interval.
    pub ci95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count.max(1) as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        let std_err = std_dev / (count.max(1) as f64).sqrt();
        let ci95 = if count > 1 {
            let t = StudentsT::new(0.0, 1.0, (count - 1) as f64).expect("positive degrees of freedom");
            t.inverse_cdf(0.975) * std_err
        } else {
            0.0
        };
        Summary { count, mean, std_dev, std_err, ci95 }
    }
}

/// Records of `trials` trials and their summary.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub records: Vec<CompletionRecord>,
    pub summary: Summary,
}

impl BatchResult {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.completion_time_s).collect()
    }

    pub fn mean_epsilon(&self) -> f64 {
        self.records.iter().map(|r| r.epsilon_observed as f64).sum::<f64>() / self.records.len().max(1) as f64
    }
}

/// Trials run in parallel; records come back in trial order.
pub fn batch(config: &SimConfig, scheme: Scheme, trials: usize, paired: bool) -> Result<BatchResult> {
    if trials == 0 {
        return Err(domain("trials must be at least 1"));
    }
    config.validate()?;
    let records = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, scheme, trial, paired);
            let r = run_trial(config, scheme, seed, false)?;
            Ok(CompletionRecord {
                scheme: scheme.label(),
                n: config.n,
                z: config.z,
                b: config.b,
                m: config.m,
                ell: config.ell,
                scenario: config.scenario.label(),
                adversary_rule: config.adversary_rule.label(),
                trial,
                seed,
                completion_time_s: r.completion_time,
                packets_sent: r.packets_sent,
                epsilon_observed: r.epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = records.iter().map(|r| r.completion_time_s).collect();
    Ok(BatchResult { summary: Summary::of(&times), records })
}

/// `q`-quantile of the bootstrap distribution of the mean of `values`.
pub fn bootstrap_mean_quantile(values: &[f64], q: f64, resamples: usize, seed: u64) -> f64 {
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let idx = ((q * resamples as f64).floor() as usize).min(resamples - 1);
    means[idx]
}

/// Whether `mean(lo) <= mean(hi)` holds at one-sided `confidence`, judged
/// by bootstrapping the paired differences `hi - lo`.
pub fn paired_le(lo: &[f64], hi: &[f64], confidence: f64, seed: u64) -> bool {
    let diffs: Vec<f64> = hi.iter().zip(lo).map(|(h, l)| h - l).collect();
    bootstrap_mean_quantile(&diffs, 1.0 - confidence, 10_000, seed) >= 0.0
}

pub const CSV_HEADER: &str =
    "scheme,n,z,b,m,ell,scenario,adversary_rule,trial,seed,completion_time_s,packets_sent,epsilon_observed";

/// Write `# manifest`, the header, then one row per record.
pub fn write_csv<W: Write>(mut out: W, manifest: &str, records: &[CompletionRecord]) -> Result<()> {
    writeln!(out, "# {}", manifest.replace('\n', " "))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
