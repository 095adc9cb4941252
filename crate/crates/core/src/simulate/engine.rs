//! Discrete-event execution of the adaptive schemes on the real
//! [`MasterState`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{self, SimConfig, WorkerProfile, DATA_STREAM};
use crate::error::{Error, Result};
use crate::gf256::FieldMatrix;
use crate::prac::{compute, service_sample, Dispatch, MasterOptions, MasterState, ResultMsg};

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    PacketSent { worker: usize, round: u32, slot: usize, time: f64 },
    ResultArrived { worker: usize, round: u32, slot: usize, time: f64 },
    Stop { time: f64 },
}

/// Result of one adaptive run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub completion_time: f64,
    pub packets_sent: usize,
    /// Secure results the decoder consumed beyond `b`.
    pub epsilon: usize,
    pub max_consumed_round: u32,
    /// `A x` as decoded.
    pub output: FieldMatrix,
    /// The product computed directly, for comparison.
    pub expected: FieldMatrix,
    pub trace: Option<Vec<TraceEvent>>,
}

impl Outcome {
    pub fn is_correct(&self) -> bool {
        self.output == self.expected
    }
}

#[derive(Debug)]
struct Event {
    time: f64,
    // Results before timers at the same instant, then by worker index.
    class: u8,
    worker: usize,
    seq: u64,
    kind: EventKind,
}

#[derive(Debug)]
enum EventKind {
    Result { round: u32, slot: usize, result: Vec<u8>, sent_at: f64 },
    Timer { generation: u64 },
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.worker.cmp(&self.worker))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Worker {
    profile: WorkerProfile,
    rtt: f64,
    service: ChaCha8Rng,
    link: ChaCha8Rng,
    free_at: f64,
    last_sent: f64,
    latest_round: u32,
    latest_returned: bool,
    last_result_at: Option<f64>,
    timer_generation: u64,
}

/// Data matrix and vector of a trial.
pub fn trial_data(config: &SimConfig, trial_seed: u64) -> (FieldMatrix, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(DATA_STREAM);
    let a = FieldMatrix::random(config.m, config.ell, &mut rng);
    let mut x = vec![0u8; config.ell];
    rng.fill(&mut x[..]);
    (a, x)
}

/// Run the adaptive protocol with collusion bound `z` on the given subset of
/// workers (original indices, which pick the delay streams).
pub fn run_adaptive(
    config: &SimConfig,
    trial_seed: u64,
    active: &[usize],
    z: usize,
    record_trace: bool,
) -> Result<Outcome> {
    let profiles = config.profiles(trial_seed)?;
    let (a, x) = trial_data(config, trial_seed);
    let n = active.len();
    let opts = MasterOptions::new(n, z, config.b, model::mix_seed(trial_seed, 0x4D41_5354));
    let mut master = MasterState::new(&a, opts)?;
    let unit = config.service_unit();
    let (down_bits, up_bits) = (config.packet_bits(), config.result_bits());
    let x_bits = 8.0 * config.ell as f64;

    let mut workers: Vec<Worker> = active
        .iter()
        .map(|&w| {
            let profile = profiles[w];
            let mut link = model::link_rng(trial_seed, w);
            // x reaches each worker before its first packet can start.
            let x_arrival = model::sample_transmission(&profile, x_bits, &mut link);
            Worker {
                profile,
                rtt: config.mean_rtt(&profile),
                service: model::service_rng(trial_seed, w),
                link,
                free_at: x_arrival,
                last_sent: 0.0,
                latest_round: 0,
                latest_returned: false,
                last_result_at: None,
                timer_generation: 0,
            }
        })
        .collect();

    let mut trace = record_trace.then(Vec::new);
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    for w in 0..n {
        queue.push(Event { time: 0.0, class: 1, worker: w, seq, kind: EventKind::Timer { generation: 0 } });
        seq += 1;
    }
    let cap = 64 * (config.b + 16) * n.max(1) + 1024;

    while let Some(ev) = queue.pop() {
        let now = ev.time;
        let w = ev.worker;
        match ev.kind {
            EventKind::Timer { generation } => {
                if generation != workers[w].timer_generation {
                    continue;
                }
                let packet = master.next_packet(w)?;
                let worker = &mut workers[w];
                let arrive = now + model::sample_transmission(&worker.profile, down_bits, &mut worker.link);
                let start = arrive.max(worker.free_at);
                let finish = start + model::sample_packet_service(&worker.profile, unit, &mut worker.service);
                worker.free_at = finish;
                let result_at = finish + model::sample_transmission(&worker.profile, up_bits, &mut worker.link);
                worker.last_sent = now;
                worker.latest_round = packet.round;
                worker.latest_returned = false;
                worker.timer_generation += 1;
                if let Some(t) = trace.as_mut() {
                    t.push(TraceEvent::PacketSent { worker: w, round: packet.round, slot: packet.slot, time: now });
                }
                queue.push(Event {
                    time: result_at,
                    class: 0,
                    worker: w,
                    seq,
                    kind: EventKind::Result {
                        round: packet.round,
                        slot: packet.slot,
                        result: compute(&packet.payload, &x),
                        sent_at: now,
                    },
                });
                seq += 1;
                schedule(&master, &mut workers[w], w, now, &mut queue, &mut seq);
                if master.packets_sent() > cap {
                    return Err(Error::State(format!("no completion after {cap} packets")));
                }
            }
            EventKind::Result { round, slot, result, sent_at } => {
                let worker = &mut workers[w];
                let sample = service_sample(sent_at, now, worker.last_result_at, worker.rtt);
                worker.last_result_at = Some(now);
                if round == worker.latest_round {
                    worker.latest_returned = true;
                }
                if let Some(t) = trace.as_mut() {
                    t.push(TraceEvent::ResultArrived { worker: w, round, slot, time: now });
                }
                master.on_result(ResultMsg { worker: w, round, slot, result, service_sample: Some(sample) })?;
                if let Some(output) = master.try_finish() {
                    if let Some(t) = trace.as_mut() {
                        t.push(TraceEvent::Stop { time: now });
                    }
                    return Ok(Outcome {
                        completion_time: now,
                        packets_sent: master.packets_sent(),
                        epsilon: master.secure_consumed().saturating_sub(config.b),
                        max_consumed_round: master.max_consumed_round(),
                        output,
                        expected: a.mat_vec_mul(&FieldMatrix::column(x))?,
                        trace,
                    });
                }
                schedule(&master, &mut workers[w], w, now, &mut queue, &mut seq);
            }
        }
    }
    Err(Error::State("event queue drained before decoding".into()))
}

// (Re)arm the dispatch timer of worker `w` from its current history.
fn schedule(
    master: &MasterState,
    worker: &mut Worker,
    w: usize,
    now: f64,
    queue: &mut BinaryHeap<Event>,
    seq: &mut u64,
) {
    let returned = worker.latest_returned.then_some(now);
    if let Dispatch::At(t) = master.dispatch_time(w, now, worker.last_sent, returned) {
        worker.timer_generation += 1;
        queue.push(Event {
            time: t,
            class: 1,
            worker: w,
            seq: *seq,
            kind: EventKind::Timer { generation: worker.timer_generation },
        });
        *seq += 1;
    }
}

/// A trace in which decoding happened before the round it used could have
/// had `z + 1` results back.
#[derive(Clone, Debug, PartialEq)]
pub struct GatingViolation {
    pub round: u32,
    pub decode_time: f64,
    /// Results of `round` that had arrived by `decode_time`.
    pub results_by_then: usize,
}

/// Decoding cannot precede the `(z+1)`-th result of the highest round whose
/// secure results it used.
pub fn check_gating(
    trace: &[TraceEvent],
    z: usize,
    decode_time: f64,
    max_consumed_round: u32,
) -> std::result::Result<(), GatingViolation> {
    let mut times: Vec<f64> = trace
        .iter()
        .filter_map(|e| match e {
            TraceEvent::ResultArrived { round, time, .. } if *round == max_consumed_round => Some(*time),
            _ => None,
        })
        .collect();
    times.sort_by(f64::total_cmp);
    match times.get(z) {
        Some(&t) if decode_time >= t => Ok(()),
        _ => Err(GatingViolation {
            round: max_consumed_round,
            decode_time,
            results_by_then: times.iter().filter(|&&t| t <= decode_time).count(),
        }),
    }
}

/// No packet may leave after the stop broadcast, and every result follows
/// its packet.
pub fn check_causality(trace: &[TraceEvent]) -> std::result::Result<(), String> {
    let stop = trace.iter().find_map(|e| match e {
        TraceEvent::Stop { time } => Some(*time),
        _ => None,
    });
    let mut sent = std::collections::HashMap::new();
    for e in trace {
        match e {
            TraceEvent::PacketSent { worker, round, time, .. } => {
                if stop.is_some_and(|s| *time > s) {
                    return Err(format!("packet (worker {worker}, round {round}) sent after stop"));
                }
                sent.insert((*worker, *round), *time);
            }
            TraceEvent::ResultArrived { worker, round, time, .. } => match sent.get(&(*worker, *round)) {
                Some(&s) if s <= *time => {}
                _ => return Err(format!("result (worker {worker}, round {round}) precedes its packet")),
            },
            TraceEvent::Stop { .. } => {}
        }
    }
    Ok(())
}
