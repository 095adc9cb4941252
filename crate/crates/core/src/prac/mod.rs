//! The master side of the protocol: round/slot assignment, secure packet
//! construction, rate-adaptive dispatch decisions, result ingestion with key
//! removal, and decode gating.
//!
//! A worker at round `t` that is the `j`-th to reach that round receives the
//! raw key `R_{t,j}` if `j <= z`, and otherwise a fresh fountain packet padded
//! with `g_j R_t`. A secure result of round `t` only reaches the decoder once
//! all `z` key products of round `t` are back.
//!
//! [`MasterState`] knows nothing about transports or clocks; the simulator
//! and the TCP runtime both drive it through [`MasterState::next_packet`],
//! [`MasterState::on_result`] and [`MasterState::dispatch_time`].

mod audit;
mod estimator;
mod hide;
mod lockstep;

use std::collections::{HashMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use audit::{audit_privacy, AuditFailure, AuditReport};
pub use estimator::{service_sample, ServiceEstimator};
pub use hide::{hide_x_run, GroupRunner, GroupSpec};
pub use lockstep::{run_lockstep, LockstepEvent, LockstepGroups, LockstepRun};

use crate::error::{domain, Error, Result};
use crate::fountain::{self, DegreeDistribution, FountainSpec, PeelingDecoder};
use crate::gf256::FieldMatrix;
use crate::keycode::{self, KeyGenerator, RoundKeys};

/// What a packet carries besides its payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PacketKind {
    /// Raw key `R_{t,key_index}` (1-based).
    Key { key_index: usize },
    /// Information packet `spec` padded with generator row `g_row` (1-based).
    Secure { spec: FountainSpec, g_row: usize },
}

/// One unit of work sent to a worker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Packet {
    pub worker: usize,
    /// 1-based round: the packet is the `round`-th one this worker receives.
    pub round: u32,
    /// 1-based arrival rank among the workers that reached `round`.
    pub slot: usize,
    pub kind: PacketKind,
    pub payload: FieldMatrix,
}

impl Packet {
    pub fn is_key(&self) -> bool {
        matches!(self.kind, PacketKind::Key { .. })
    }
}

/// A computed `packet * x` returned by a worker.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultMsg {
    pub worker: usize,
    pub round: u32,
    pub slot: usize,
    pub result: Vec<u8>,
    /// Service time the driver inferred for this packet, if any.
    pub service_sample: Option<f64>,
}

/// When the next packet to a worker should leave.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dispatch {
    At(f64),
    /// No estimate yet: send when the outstanding result returns.
    AwaitResult,
}

/// Parameters of one protocol instance.
#[derive(Clone, Debug)]
pub struct MasterOptions {
    pub n: usize,
    pub z: usize,
    pub b: usize,
    /// Overrides the Vandermonde-derived generator when set.
    pub generator: Option<KeyGenerator>,
    pub soliton_c: f64,
    pub soliton_delta: f64,
    pub seed: u64,
}

impl MasterOptions {
    pub fn new(n: usize, z: usize, b: usize, seed: u64) -> Self {
        MasterOptions {
            n,
            z,
            b,
            generator: None,
            soliton_c: fountain::DEFAULT_C,
            soliton_delta: fountain::DEFAULT_DELTA,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
struct Outstanding {
    slot: usize,
    kind: OutstandingKind,
}

#[derive(Clone, Debug)]
enum OutstandingKind {
    Key(usize),
    Secure(FountainSpec, usize),
}

/// Master-side protocol state. Single owner; every mutation goes through
/// `&mut self`.
#[derive(Debug)]
pub struct MasterState {
    n: usize,
    z: usize,
    b: usize,
    m: usize,
    block_rows: usize,
    cols: usize,
    blocks: Vec<FieldMatrix>,
    generator: Option<KeyGenerator>,
    dist: DegreeDistribution,
    rng: ChaCha8Rng,
    worker_round: Vec<u32>,
    round_rank: Vec<usize>,
    round_keys: HashMap<u32, RoundKeys>,
    key_results: HashMap<u32, Vec<Option<Vec<u8>>>>,
    secure_pending: HashMap<u32, Vec<(usize, FountainSpec, Vec<u8>)>>,
    outstanding: HashMap<(usize, u32), Outstanding>,
    completed: HashSet<(usize, u32)>,
    decoder: PeelingDecoder,
    estimator: ServiceEstimator,
    scripted_specs: VecDeque<FountainSpec>,
    max_consumed_round: u32,
    secure_consumed: usize,
    packets_sent: usize,
    output: Option<FieldMatrix>,
    stopped: bool,
}

impl MasterState {
    /// Split `a` into `b` row blocks (zero-padding if needed) and prepare an
    /// instance for `n` workers tolerating `z` colluders. `z = 0` gives the
    /// non-private adaptive scheme: no keys, every packet is a plain
    /// fountain packet.
    pub fn new(a: &FieldMatrix, opts: MasterOptions) -> Result<Self> {
        let MasterOptions { n, z, b, .. } = opts;
        if n == 0 || n > 255 {
            return Err(domain(format!("worker count {n} outside 1..=255")));
        }
        if z >= n {
            return Err(domain(format!("need z < n, got n={n}, z={z}")));
        }
        if b == 0 || b > a.rows().max(1) {
            return Err(domain(format!("b={b} must be in 1..={}", a.rows())));
        }
        if a.cols() == 0 {
            return Err(domain("data matrix has no columns"));
        }
        let generator = match (z, opts.generator) {
            (0, _) => None,
            (_, Some(g)) => {
                if g.n() != n || g.z() != z {
                    return Err(domain(format!(
                        "generator is {}x{}, expected {n}x{z}",
                        g.n(),
                        g.z()
                    )));
                }
                Some(g)
            }
            (_, None) => Some(KeyGenerator::build(n, z)?),
        };
        let blocks = a.split_rows(b)?;
        let block_rows = blocks[0].rows();
        Ok(MasterState {
            n,
            z,
            b,
            m: a.rows(),
            block_rows,
            cols: a.cols(),
            blocks,
            generator,
            dist: DegreeDistribution::robust_soliton(b, opts.soliton_c, opts.soliton_delta)?,
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            worker_round: vec![0; n],
            round_rank: Vec::new(),
            round_keys: HashMap::new(),
            key_results: HashMap::new(),
            secure_pending: HashMap::new(),
            outstanding: HashMap::new(),
            completed: HashSet::new(),
            decoder: PeelingDecoder::new(b, block_rows),
            estimator: ServiceEstimator::new(n),
            scripted_specs: VecDeque::new(),
            max_consumed_round: 0,
            secure_consumed: 0,
            packets_sent: 0,
            output: None,
            stopped: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn block_rows(&self) -> usize {
        self.block_rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn generator(&self) -> Option<&KeyGenerator> {
        self.generator.as_ref()
    }

    pub fn blocks(&self) -> &[FieldMatrix] {
        &self.blocks
    }

    pub fn decoder(&self) -> &PeelingDecoder {
        &self.decoder
    }

    pub fn estimator(&self) -> &ServiceEstimator {
        &self.estimator
    }

    /// Packets dispatched to `worker` so far; its next packet opens round
    /// `worker_round + 1`.
    pub fn worker_round(&self, worker: usize) -> u32 {
        self.worker_round[worker]
    }

    /// How many workers have reached `round`.
    pub fn round_rank(&self, round: u32) -> usize {
        self.round_rank.get(round as usize - 1).copied().unwrap_or(0)
    }

    pub fn round_keys(&self, round: u32) -> Option<&RoundKeys> {
        self.round_keys.get(&round)
    }

    /// Rounds for which keys were generated.
    pub fn rounds_keyed(&self) -> usize {
        self.round_keys.len()
    }

    /// Highest round whose secure results were handed to the decoder.
    pub fn max_consumed_round(&self) -> u32 {
        self.max_consumed_round
    }

    pub fn secure_consumed(&self) -> usize {
        self.secure_consumed
    }

    pub fn packets_sent(&self) -> usize {
        self.packets_sent
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    /// Queue explicit fountain specs to use, in order, before sampling.
    pub fn queue_specs(&mut self, specs: impl IntoIterator<Item = FountainSpec>) {
        self.scripted_specs.extend(specs);
    }

    /// Whether every key product of `round` is back (trivially so if `z = 0`).
    pub fn round_keys_complete(&self, round: u32) -> bool {
        self.z == 0
            || self
                .key_results
                .get(&round)
                .is_some_and(|r| r.iter().all(Option::is_some))
    }

    /// Build the next packet for `worker` and advance its round.
    pub fn next_packet(&mut self, worker: usize) -> Result<Packet> {
        if self.stopped {
            return Err(Error::State("master has stopped".into()));
        }
        if worker >= self.n {
            return Err(domain(format!("worker {worker} out of range (n = {})", self.n)));
        }
        let round = self.worker_round[worker] + 1;
        let idx = round as usize - 1;
        if self.round_rank.len() <= idx {
            self.round_rank.resize(idx + 1, 0);
        }
        let slot = self.round_rank[idx] + 1;
        debug_assert!(slot <= self.n);

        if self.z > 0 && !self.round_keys.contains_key(&round) {
            let keys = keycode::fresh_round_keys(
                round,
                self.z,
                self.block_rows,
                self.cols,
                &mut self.rng,
            )?;
            self.round_keys.insert(round, keys);
        }

        let (kind, payload, pending) = if slot <= self.z {
            let key = self.round_keys[&round].keys[slot - 1].clone();
            (
                PacketKind::Key { key_index: slot },
                key,
                OutstandingKind::Key(slot),
            )
        } else {
            let spec = match self.scripted_specs.pop_front() {
                Some(s) => s,
                None => fountain::sample_spec(&self.dist, &mut self.rng),
            };
            let mut payload = fountain::encode(&self.blocks, &spec)?;
            if let Some(g) = &self.generator {
                payload.add_assign(&g.encode_key_row(slot, &self.round_keys[&round])?)?;
            }
            (
                PacketKind::Secure {
                    spec: spec.clone(),
                    g_row: slot,
                },
                payload,
                OutstandingKind::Secure(spec, slot),
            )
        };

        self.round_rank[idx] = slot;
        self.worker_round[worker] = round;
        self.outstanding.insert(
            (worker, round),
            Outstanding {
                slot,
                kind: pending,
            },
        );
        self.packets_sent += 1;
        Ok(Packet {
            worker,
            round,
            slot,
            kind,
            payload,
        })
    }

    /// When the next packet to `worker` should go, given when its latest
    /// packet left and (if already back) when that packet's result arrived.
    ///
    /// The first packet goes immediately; the second waits for the first
    /// result; after that the packet leaves one estimated service time after
    /// the previous send, or on the previous result if that comes first.
    pub fn dispatch_time(
        &self,
        worker: usize,
        now: f64,
        last_sent: f64,
        last_result: Option<f64>,
    ) -> Dispatch {
        if self.worker_round[worker] == 0 {
            return Dispatch::At(now);
        }
        match (self.estimator.mean(worker), last_result) {
            (None, None) => Dispatch::AwaitResult,
            (None, Some(r)) => Dispatch::At(r.max(now)),
            (Some(beta), r) => {
                let mut at = last_sent + beta;
                if let Some(r) = r {
                    at = at.min(r);
                }
                Dispatch::At(at.max(now))
            }
        }
    }

    /// Accept a computed result. Returns the number of source blocks newly
    /// recovered.
    pub fn on_result(&mut self, msg: ResultMsg) -> Result<usize> {
        let key = (msg.worker, msg.round);
        let Some(out) = self.outstanding.remove(&key) else {
            if self.completed.contains(&key) {
                return Ok(0);
            }
            return Err(Error::Protocol(format!(
                "result for unknown packet (worker {}, round {})",
                msg.worker, msg.round
            )));
        };
        if out.slot != msg.slot {
            self.outstanding.insert(key, out);
            return Err(Error::Protocol(format!(
                "result slot {} does not match dispatched slot for (worker {}, round {})",
                msg.slot, msg.worker, msg.round
            )));
        }
        if msg.result.len() != self.block_rows {
            self.outstanding.insert(key, out);
            return Err(domain(format!(
                "result length {} != {}",
                msg.result.len(),
                self.block_rows
            )));
        }
        self.completed.insert(key);
        if let Some(s) = msg.service_sample {
            self.estimator.observe(msg.worker, s);
        }
        if self.stopped {
            return Ok(0);
        }

        match out.kind {
            OutstandingKind::Key(index) => {
                let z = self.z;
                let slots = self
                    .key_results
                    .entry(msg.round)
                    .or_insert_with(|| vec![None; z]);
                slots[index - 1] = Some(msg.result);
                if self.round_keys_complete(msg.round) {
                    let queued = self.secure_pending.remove(&msg.round).unwrap_or_default();
                    let mut newly = 0;
                    for (g_row, spec, result) in queued {
                        newly += self.consume(msg.round, g_row, &spec, result)?;
                    }
                    Ok(newly)
                } else {
                    Ok(0)
                }
            }
            OutstandingKind::Secure(spec, g_row) => {
                if self.round_keys_complete(msg.round) {
                    self.consume(msg.round, g_row, &spec, msg.result)
                } else {
                    self.secure_pending
                        .entry(msg.round)
                        .or_default()
                        .push((g_row, spec, msg.result));
                    Ok(0)
                }
            }
        }
    }

    fn consume(&mut self, round: u32, g_row: usize, spec: &FountainSpec, mut result: Vec<u8>) -> Result<usize> {
        if let Some(g) = &self.generator {
            let products = &self.key_results[&round];
            let refs: Vec<&[u8]> = products
                .iter()
                .map(|p| p.as_deref().expect("round keys complete"))
                .collect();
            let pad = g.combine_key_results(g_row, &refs)?;
            result.iter_mut().zip(&pad).for_each(|(r, p)| *r ^= p);
        }
        self.max_consumed_round = self.max_consumed_round.max(round);
        self.secure_consumed += 1;
        self.decoder.ingest(spec, &result)
    }

    /// If every block is decoded, assemble `A x`, stop, and return it.
    pub fn try_finish(&mut self) -> Option<FieldMatrix> {
        if let Some(out) = &self.output {
            return Some(out.clone());
        }
        if !self.decoder.is_complete() {
            return None;
        }
        let parts = self.decoder.decoded().ok()?;
        let mut values = Vec::with_capacity(self.b * self.block_rows);
        for p in parts {
            values.extend_from_slice(p);
        }
        values.truncate(self.m);
        let out = FieldMatrix::column(values);
        self.output = Some(out.clone());
        self.stopped = true;
        Some(out)
    }

    /// Stop without a result (e.g. on timeout).
    pub fn stop(&mut self) {
        self.stopped = true;
    }

    /// Packets dispatched but not yet answered.
    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }
}

/// What a worker does with a packet.
pub fn compute(packet_payload: &FieldMatrix, x: &[u8]) -> Vec<u8> {
    packet_payload.mul_slice(x)
}

#[cfg(test)]
mod tests;
