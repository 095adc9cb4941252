//! Configurations, worker profiles and the delay model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{domain, Result};

/// How per-worker rates are assigned.
#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    /// Half of the workers at rate 3, a quarter at 1, the rest at 9.
    One,
    /// Thirds at rates 1, 3 and 9.
    Two,
    /// Rates uniform on [0.5, 9], drawn once from the config seed.
    Three,
    /// `floor(z/2)` workers at 9, `z - floor(z/2)` at 3, the other `n - z`
    /// at 1: the slowest `n - z` workers are homogeneous.
    Clustered,
    Homogeneous(f64),
    Custom(Vec<f64>),
}

impl Scenario {
    pub fn label(&self) -> String {
        match self {
            Scenario::One => "1".into(),
            Scenario::Two => "2".into(),
            Scenario::Three => "3".into(),
            Scenario::Clustered => "clustered".into(),
            Scenario::Homogeneous(l) => format!("homogeneous:{l}"),
            Scenario::Custom(_) => "custom".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s {
            "1" => Ok(Scenario::One),
            "2" => Ok(Scenario::Two),
            "3" => Ok(Scenario::Three),
            "clustered" => Ok(Scenario::Clustered),
            _ => {
                if let Some(l) = s.strip_prefix("homogeneous:") {
                    return l
                        .parse()
                        .map(Scenario::Homogeneous)
                        .map_err(|_| domain(format!("bad rate in scenario {s:?}")));
                }
                if let Some(list) = s.strip_prefix("custom:") {
                    return list
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map(Scenario::Custom)
                        .map_err(|_| domain(format!("bad rate list in scenario {s:?}")));
                }
                Err(domain(format!(
                    "unknown scenario {s:?} (expected 1, 2, 3, clustered, homogeneous:RATE or custom:R1,R2,..)"
                )))
            }
        }
    }

    /// Per-worker rates `lambda_i`, in worker index order.
    pub fn lambdas(&self, n: usize, z: usize, seed: u64) -> Result<Vec<f64>> {
        let fill = |groups: &[(usize, f64)]| {
            groups
                .iter()
                .flat_map(|&(count, l)| std::iter::repeat_n(l, count))
                .collect::<Vec<_>>()
        };
        let out = match self {
            Scenario::One => {
                let half = n / 2;
                let quarter = n / 4;
                fill(&[(half, 3.0), (quarter, 1.0), (n - half - quarter, 9.0)])
            }
            Scenario::Two => {
                let third = n / 3;
                fill(&[(third, 1.0), (third, 3.0), (n - 2 * third, 9.0)])
            }
            Scenario::Three => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(SCENARIO_STREAM);
                (0..n).map(|_| rng.random_range(0.5..=9.0)).collect()
            }
            Scenario::Clustered => {
                let fast = z / 2;
                fill(&[(fast, 9.0), (z - fast, 3.0), (n - z, 1.0)])
            }
            Scenario::Homogeneous(l) => vec![*l; n],
            Scenario::Custom(v) => {
                if v.len() != n {
                    return Err(domain(format!("{} custom rates for {n} workers", v.len())));
                }
                v.clone()
            }
        };
        if let Some(bad) = out.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(domain(format!("rate {bad} is not positive")));
        }
        Ok(out)
    }
}

/// What one unit of the shifted-exponential service time stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ServiceScale {
    /// One row of `A`: a packet of `m/b` rows takes `(m/b) (c + Exp(lambda))`.
    PerRow,
    /// The whole task: a packet takes `(c + Exp(lambda)) / b`, so `b`
    /// packets together have mean `c + 1/lambda`.
    PerTask,
}

impl ServiceScale {
    pub fn label(self) -> &'static str {
        match self {
            ServiceScale::PerRow => "per-row",
            ServiceScale::PerTask => "per-task",
        }
    }
}

/// Who the GC3P baseline treats as the eavesdroppers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversaryRule {
    Fastest,
    Slowest,
    Random,
}

impl AdversaryRule {
    pub fn label(self) -> &'static str {
        match self {
            AdversaryRule::Fastest => "fastest",
            AdversaryRule::Slowest => "slowest",
            AdversaryRule::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<AdversaryRule> {
        match s {
            "fastest" => Ok(AdversaryRule::Fastest),
            "slowest" => Ok(AdversaryRule::Slowest),
            "random" => Ok(AdversaryRule::Random),
            _ => Err(domain(format!("unknown adversary rule {s:?}"))),
        }
    }
}

/// Which workers the C3P baseline uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum C3pWorkers {
    All,
    /// The first `n - z` workers by index.
    NMinusZ,
}

/// Everything a stochastic run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub z: usize,
    pub b: usize,
    pub m: usize,
    pub ell: usize,
    pub scenario: Scenario,
    pub scale: ServiceScale,
    pub adversary_rule: AdversaryRule,
    pub c3p_workers: C3pWorkers,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, z: usize, b: usize, scenario: Scenario, seed: u64) -> Self {
        SimConfig {
            n,
            z,
            b,
            m: b,
            ell: 1000,
            scenario,
            scale: ServiceScale::PerRow,
            adversary_rule: AdversaryRule::Random,
            c3p_workers: C3pWorkers::All,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.z >= self.n {
            return Err(domain(format!("need z < n, got n={}, z={}", self.n, self.z)));
        }
        if self.n > 255 {
            return Err(domain(format!("n={} exceeds 255", self.n)));
        }
        if self.b == 0 || self.b > self.m {
            return Err(domain(format!("need 1 <= b <= m, got b={}, m={}", self.b, self.m)));
        }
        if self.ell == 0 {
            return Err(domain("ell must be positive"));
        }
        self.lambdas().map(|_| ())
    }

    pub fn lambdas(&self) -> Result<Vec<f64>> {
        self.scenario.lambdas(self.n, self.z, self.seed)
    }

    /// Rows per block, after zero-padding `m` up to a multiple of `b`.
    pub fn block_rows(&self) -> usize {
        self.m.div_ceil(self.b)
    }

    /// Service-time multiplier of one packet.
    pub fn service_unit(&self) -> f64 {
        match self.scale {
            ServiceScale::PerRow => self.block_rows() as f64,
            ServiceScale::PerTask => 1.0 / self.b as f64,
        }
    }

    /// Bits in one packet sent to a worker.
    pub fn packet_bits(&self) -> f64 {
        8.0 * (self.block_rows() * self.ell) as f64
    }

    /// Bits in one returned result.
    pub fn result_bits(&self) -> f64 {
        8.0 * self.block_rows() as f64
    }

    /// Per-worker profiles for one trial. Rates come from the scenario,
    /// link capacities from the trial seed.
    pub fn profiles(&self, trial_seed: u64) -> Result<Vec<WorkerProfile>> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        rng.set_stream(PROFILE_STREAM);
        Ok(self
            .lambdas()?
            .into_iter()
            .map(|lambda| WorkerProfile {
                lambda,
                shift: 1.0 / lambda,
                capacity_bps: rng.random_range(10.0e6..=20.0e6),
            })
            .collect())
    }

    /// Mean service time of one packet at a worker.
    pub fn expected_service(&self, p: &WorkerProfile) -> f64 {
        self.service_unit() * (p.shift + 1.0 / p.lambda)
    }

    /// Average round trip of one packet and its result at the mean rate.
    pub fn mean_rtt(&self, p: &WorkerProfile) -> f64 {
        (self.packet_bits() + self.result_bits()) / p.capacity_bps
    }
}

/// One worker's delay parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkerProfile {
    pub lambda: f64,
    /// `c_i`, equal to `1 / lambda_i`.
    pub shift: f64,
    pub capacity_bps: f64,
}

const PROFILE_STREAM: u64 = u64::MAX;
const SCENARIO_STREAM: u64 = u64::MAX - 1;
pub(crate) const ADVERSARY_STREAM: u64 = u64::MAX - 2;
pub(crate) const DATA_STREAM: u64 = u64::MAX - 3;

/// Service draws of worker `w` in a trial. Every scheme uses the same
/// stream, so paired runs see the same per-packet delays.
pub fn service_rng(trial_seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(2 * worker as u64);
    rng
}

/// Link draws of worker `w` in a trial.
pub fn link_rng(trial_seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(2 * worker as u64 + 1);
    rng
}

/// `unit * (c + Exp(lambda))`.
pub fn sample_packet_service<R: Rng + ?Sized>(p: &WorkerProfile, unit: f64, rng: &mut R) -> f64 {
    let exp = Exp::new(p.lambda).expect("positive rate");
    unit * (p.shift + exp.sample(rng))
}

/// `bits / rate` with the rate drawn from Poisson(C) and kept at >= 1 bit/s.
pub fn sample_transmission<R: Rng + ?Sized>(p: &WorkerProfile, bits: f64, rng: &mut R) -> f64 {
    let rate: f64 = Poisson::new(p.capacity_bps).expect("positive capacity").sample(rng);
    bits / rate.max(1.0)
}

/// Deterministic 64-bit mix, used to derive per-trial seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
