//! In-memory driver with no clock: every worker holds one packet at a time,
//! and a random outstanding worker returns next. Good for correctness tests
//! and for exploring arrival orders; timing lives in `simulate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::hide::{GroupRunner, GroupSpec};
use super::{compute, MasterOptions, MasterState, Packet, ResultMsg};
use crate::error::{Error, Result};
use crate::gf256::FieldMatrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LockstepEvent {
    Sent { worker: usize, round: u32, slot: usize },
    Returned { worker: usize, round: u32, slot: usize },
    Stop,
}

#[derive(Clone, Debug)]
pub struct LockstepRun {
    pub output: FieldMatrix,
    pub events: Vec<LockstepEvent>,
    pub packets: Vec<Packet>,
    pub packets_sent: usize,
    /// Secure results consumed by the decoder beyond `b`.
    pub epsilon: usize,
}

/// Run one instance to completion. `order_seed` drives which worker returns
/// next; `opts.seed` drives keys and fountain specs.
pub fn run_lockstep(
    a: &FieldMatrix,
    x: &[u8],
    opts: MasterOptions,
    order_seed: u64,
) -> Result<LockstepRun> {
    let n = opts.n;
    let b = opts.b;
    let mut master = MasterState::new(a, opts)?;
    let mut order = ChaCha8Rng::seed_from_u64(order_seed);
    let mut inflight: Vec<Option<Packet>> = vec![None; n];
    let mut events = Vec::new();
    let mut packets = Vec::new();

    for (w, slot) in inflight.iter_mut().enumerate() {
        let p = master.next_packet(w)?;
        events.push(LockstepEvent::Sent { worker: w, round: p.round, slot: p.slot });
        packets.push(p.clone());
        *slot = Some(p);
    }
    // A run that needs this many packets is not going to finish.
    let cap = 64 * (b + 16) * n;
    loop {
        let w = order.random_range(0..n);
        let p = inflight[w].take().expect("every worker holds a packet");
        let result = compute(&p.payload, x);
        events.push(LockstepEvent::Returned { worker: w, round: p.round, slot: p.slot });
        master.on_result(ResultMsg {
            worker: w,
            round: p.round,
            slot: p.slot,
            result,
            service_sample: None,
        })?;
        if let Some(output) = master.try_finish() {
            events.push(LockstepEvent::Stop);
            return Ok(LockstepRun {
                output,
                events,
                packets,
                packets_sent: master.packets_sent(),
                epsilon: master.secure_consumed().saturating_sub(b),
            });
        }
        if master.packets_sent() > cap {
            return Err(Error::State(format!("no completion after {cap} packets")));
        }
        let next = master.next_packet(w)?;
        events.push(LockstepEvent::Sent { worker: w, round: next.round, slot: next.slot });
        packets.push(next.clone());
        inflight[w] = Some(next);
    }
}

/// [`GroupRunner`] over two lockstep instances that keeps what each group's
/// workers were sent.
#[derive(Debug, Default)]
pub struct LockstepGroups {
    pub b: usize,
    pub seed: u64,
    /// Per group: the vector broadcast to the group, then every packet payload.
    pub transcripts: [Vec<Vec<u8>>; 2],
}

impl LockstepGroups {
    pub fn new(b: usize, seed: u64) -> Self {
        LockstepGroups { b, seed, transcripts: [Vec::new(), Vec::new()] }
    }
}

impl GroupRunner for LockstepGroups {
    fn run(&mut self, group: usize, spec: GroupSpec, a: &FieldMatrix, v: &[u8]) -> Result<Vec<u8>> {
        let seed = self.seed.wrapping_add(2 * group as u64);
        let run = run_lockstep(a, v, MasterOptions::new(spec.n, spec.z, self.b, seed), seed + 1)?;
        let log = &mut self.transcripts[group];
        log.push(v.to_vec());
        log.extend(run.packets.into_iter().map(|p| p.payload.into_bytes()));
        Ok(run.output.into_bytes())
    }
}
