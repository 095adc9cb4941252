//! Master runtime: one reader thread per worker feeding an ordered event
//! queue, with the protocol state owned by the calling thread.

use std::collections::HashMap;
use std::net::TcpStream;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{self, Message, PacketWire};
use crate::error::{domain, Error, Result};
use crate::gf256::FieldMatrix;
use crate::keycode::KeyGenerator;
use crate::prac::{service_sample, Dispatch, GroupRunner, GroupSpec, MasterOptions, MasterState, ResultMsg};

/// A HELLO goes out after this many frames to the same worker.
pub const HELLO_EVERY: usize = 50;

// How long to wait for a stopped worker to hang up.
const DRAIN_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug)]
pub struct NetMasterOptions {
    pub z: usize,
    pub b: usize,
    pub seed: u64,
    pub timeout: Duration,
    /// How long to keep retrying each worker connection.
    pub connect_timeout: Duration,
    pub generator: Option<KeyGenerator>,
}

impl NetMasterOptions {
    pub fn new(z: usize, b: usize, seed: u64) -> Self {
        NetMasterOptions {
            z,
            b,
            seed,
            timeout: Duration::from_secs(120),
            connect_timeout: Duration::from_secs(10),
            generator: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One frame as the master saw it.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    /// Seconds since the run started.
    pub time: f64,
    pub worker: usize,
    pub direction: Direction,
    pub msg_type: u8,
    /// `(round, slot)` for PACKET, ACK_RECEIPT and RESULT frames.
    pub packet: Option<(u32, u8)>,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    fn push(&mut self, time: f64, worker: usize, direction: Direction, frame: &wire::Frame) {
        let packet = match frame.msg_type {
            wire::PACKET | wire::ACK_RECEIPT | wire::RESULT if frame.payload.len() >= 5 => Some((
                u32::from_be_bytes(frame.payload[..4].try_into().unwrap()),
                frame.payload[4],
            )),
            _ => None,
        };
        self.entries.push(TranscriptEntry {
            time,
            worker,
            direction,
            msg_type: frame.msg_type,
            packet,
            payload: frame.payload.clone(),
        });
    }

    /// Every PACKET is followed by its ACK_RECEIPT and then its RESULT, per
    /// (worker, round), in both order and time.
    pub fn check_causality(&self) -> std::result::Result<(), String> {
        let mut stage: HashMap<(usize, u32), (u8, f64)> = HashMap::new();
        for e in &self.entries {
            let Some((round, _)) = e.packet else { continue };
            let key = (e.worker, round);
            let want_prev = match (e.msg_type, e.direction) {
                (wire::PACKET, Direction::Sent) => None,
                (wire::ACK_RECEIPT, Direction::Received) => Some(wire::PACKET),
                (wire::RESULT, Direction::Received) => Some(wire::ACK_RECEIPT),
                _ => return Err(format!("unexpected frame 0x{:02x} {:?}", e.msg_type, e.direction)),
            };
            match (want_prev, stage.get(&key)) {
                (None, None) => {}
                (None, Some(_)) => return Err(format!("two packets for worker {} round {round}", e.worker)),
                (Some(p), Some(&(s, t))) if s == p && t <= e.time => {}
                _ => {
                    return Err(format!(
                        "frame 0x{:02x} for worker {} round {round} out of order",
                        e.msg_type, e.worker
                    ))
                }
            }
            stage.insert(key, (e.msg_type, e.time));
        }
        Ok(())
    }

    /// STOP went to every worker exactly once and no PACKET followed it.
    pub fn check_stop(&self, workers: usize) -> std::result::Result<(), String> {
        let mut stopped = vec![false; workers];
        for e in &self.entries {
            if e.direction != Direction::Sent {
                continue;
            }
            match e.msg_type {
                wire::STOP if stopped[e.worker] => return Err(format!("worker {} stopped twice", e.worker)),
                wire::STOP => stopped[e.worker] = true,
                wire::PACKET if stopped.iter().any(|&s| s) => {
                    return Err(format!("packet to worker {} after the stop broadcast", e.worker))
                }
                _ => {}
            }
        }
        match stopped.iter().position(|s| !s) {
            Some(w) => Err(format!("worker {w} never received STOP")),
            None => Ok(()),
        }
    }

    /// Payloads of frames sent to `worker`.
    pub fn sent_payloads(&self, worker: usize) -> impl Iterator<Item = &[u8]> {
        self.entries
            .iter()
            .filter(move |e| e.worker == worker && e.direction == Direction::Sent)
            .map(|e| e.payload.as_slice())
    }
}

/// Output of a networked run.
#[derive(Clone, Debug)]
pub struct NetRun {
    pub output: FieldMatrix,
    pub transcript: Transcript,
    pub elapsed: Duration,
    pub packets_sent: usize,
    /// Final per-worker service estimates, seconds.
    pub service_estimates: Vec<Option<f64>>,
}

enum Event {
    Frame(usize, Instant, wire::Frame),
    Closed(usize, Option<Error>),
}

struct Peer {
    stream: TcpStream,
    alive: bool,
    frames_sent: usize,
    hello_seq: u32,
    hello_sent: HashMap<u32, Instant>,
    next_echo: u32,
    rtt: Option<f64>,
    sent_at: HashMap<u32, f64>,
    last_sent: f64,
    latest_round: u32,
    latest_returned: bool,
    last_result_at: Option<f64>,
    next_dispatch: Option<f64>,
}

fn connect(endpoint: &str, patience: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + patience;
    loop {
        match TcpStream::connect(endpoint) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

/// Compute `A x` on the workers at `endpoints`, tolerating `opts.z`
/// colluders.
pub fn run_master(endpoints: &[String], a: &FieldMatrix, x: &[u8], opts: &NetMasterOptions) -> Result<NetRun> {
    let n = endpoints.len();
    if n <= opts.z {
        return Err(domain(format!("{n} workers cannot tolerate z = {}", opts.z)));
    }
    if x.len() != a.cols() {
        return Err(domain(format!("x has {} entries, A has {} columns", x.len(), a.cols())));
    }
    let mut mopts = MasterOptions::new(n, opts.z, opts.b, opts.seed);
    mopts.generator = opts.generator.clone();
    let mut master = MasterState::new(a, mopts)?;

    let start = Instant::now();
    let secs = |t: Instant| t.duration_since(start).as_secs_f64();
    let (tx, rx) = mpsc::channel();
    let mut peers = Vec::with_capacity(n);
    let mut readers = Vec::with_capacity(n);
    for (w, ep) in endpoints.iter().enumerate() {
        let stream = connect(ep, opts.connect_timeout)?;
        stream.set_nodelay(true)?;
        let mut read_half = stream.try_clone()?;
        let tx = tx.clone();
        readers.push(thread::spawn(move || loop {
            match wire::read_frame(&mut read_half) {
                Ok(Some(f)) => {
                    // Once the run is over keep draining until the worker
                    // closes, so late results do not turn the close into a reset.
                    let _ = tx.send(Event::Frame(w, Instant::now(), f));
                }
                Ok(None) => {
                    let _ = tx.send(Event::Closed(w, None));
                    return;
                }
                Err(e) => {
                    let _ = tx.send(Event::Closed(w, Some(e)));
                    return;
                }
            }
        }));
        peers.push(Peer {
            stream,
            alive: true,
            frames_sent: 0,
            hello_seq: 0,
            hello_sent: HashMap::new(),
            next_echo: 0,
            rtt: None,
            sent_at: HashMap::new(),
            last_sent: 0.0,
            latest_round: 0,
            latest_returned: false,
            last_result_at: None,
            next_dispatch: None,
        });
    }
    drop(tx);

    let mut transcript = Transcript::default();
    let send = |peer: &mut Peer, w: usize, msg: &Message, transcript: &mut Transcript| -> Result<()> {
        let frame = msg.to_frame();
        let now = Instant::now();
        if let Message::Hello { seq } = msg {
            peer.hello_sent.insert(*seq, now);
        }
        wire::write_frame(&mut peer.stream, &frame)?;
        transcript.push(secs(now), w, Direction::Sent, &frame);
        peer.frames_sent += 1;
        Ok(())
    };

    let x_msg = Message::VectorX(FieldMatrix::column(x.to_vec()));
    for (w, peer) in peers.iter_mut().enumerate() {
        send(peer, w, &Message::Hello { seq: 0 }, &mut transcript)?;
        peer.hello_seq = 1;
        send(peer, w, &x_msg, &mut transcript)?;
        peer.next_dispatch = Some(0.0);
    }

    let deadline = start + opts.timeout;
    let output = loop {
        // Fire every dispatch that is due.
        let now = secs(Instant::now());
        for w in 0..n {
            let due = peers[w].alive && peers[w].next_dispatch.is_some_and(|t| t <= now);
            if !due {
                continue;
            }
            let packet = master.next_packet(w)?;
            let wire_packet = PacketWire::from_packet(&packet)?;
            let peer = &mut peers[w];
            peer.next_dispatch = None;
            if let Err(e) = send(peer, w, &Message::Packet(wire_packet), &mut transcript) {
                log::warn!("worker {w} unreachable: {e}");
                peer.alive = false;
                continue;
            }
            let t = secs(Instant::now());
            peer.sent_at.insert(packet.round, t);
            peer.last_sent = t;
            peer.latest_round = packet.round;
            peer.latest_returned = false;
            if peer.frames_sent % HELLO_EVERY == 0 {
                let seq = peer.hello_seq;
                peer.hello_seq += 1;
                send(peer, w, &Message::Hello { seq }, &mut transcript)?;
            }
            rearm(&master, peer, w, t);
        }

        let now_i = Instant::now();
        if now_i >= deadline {
            master.stop();
            return Err(Error::Timeout(opts.timeout));
        }
        let next_timer = peers
            .iter()
            .filter(|p| p.alive)
            .filter_map(|p| p.next_dispatch)
            .fold(f64::INFINITY, f64::min);
        let wait_until = if next_timer.is_finite() {
            (start + Duration::from_secs_f64(next_timer.max(0.0))).min(deadline)
        } else {
            deadline
        };
        let event = match rx.recv_timeout(wait_until.saturating_duration_since(now_i)) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol("all worker connections closed".into()));
            }
        };
        match event {
            Event::Closed(w, err) => {
                log::warn!("worker {w} disconnected: {}", err.map(|e| e.to_string()).unwrap_or("end of stream".into()));
                peers[w].alive = false;
                peers[w].next_dispatch = None;
            }
            Event::Frame(w, at, frame) => {
                let t = secs(at);
                transcript.push(t, w, Direction::Received, &frame);
                match Message::from_frame(&frame)? {
                    Message::Hello { seq } => {
                        let peer = &mut peers[w];
                        if seq != peer.next_echo {
                            return Err(Error::Protocol(format!(
                                "worker {w} echoed HELLO {seq}, expected {}: frames reordered",
                                peer.next_echo
                            )));
                        }
                        peer.next_echo += 1;
                        if let Some(sent) = peer.hello_sent.remove(&seq) {
                            let sample = at.duration_since(sent).as_secs_f64();
                            peer.rtt = Some(match peer.rtt {
                                Some(r) => 0.75 * r + 0.25 * sample,
                                None => sample,
                            });
                        }
                    }
                    Message::AckReceipt { .. } => {}
                    Message::Result { round, slot, result } => {
                        let peer = &mut peers[w];
                        let Some(sent) = peer.sent_at.remove(&round) else {
                            return Err(Error::Protocol(format!("worker {w} returned unknown round {round}")));
                        };
                        let sample = service_sample(sent, t, peer.last_result_at, peer.rtt.unwrap_or(0.0));
                        peer.last_result_at = Some(t);
                        if round == peer.latest_round {
                            peer.latest_returned = true;
                        }
                        if result.cols() != 1 {
                            return Err(Error::Protocol("result must be a column".into()));
                        }
                        master.on_result(ResultMsg {
                            worker: w,
                            round,
                            slot: slot as usize,
                            result: result.into_bytes(),
                            service_sample: Some(sample),
                        })?;
                        if let Some(out) = master.try_finish() {
                            break out;
                        }
                        rearm(&master, &mut peers[w], w, t);
                    }
                    other => {
                        return Err(Error::Protocol(format!("unexpected frame from worker {w}: {other:?}")));
                    }
                }
            }
        }
    };

    for (w, peer) in peers.iter_mut().enumerate() {
        if let Err(e) = send(peer, w, &Message::Stop, &mut transcript) {
            log::warn!("could not stop worker {w}: {e}");
        }
    }
    let elapsed = start.elapsed();
    for peer in &peers {
        let _ = peer.stream.set_read_timeout(Some(DRAIN_TIMEOUT));
        let _ = peer.stream.shutdown(std::net::Shutdown::Write);
    }
    // Readers finish once workers close their side.
    drop(rx);
    for r in readers {
        let _ = r.join();
    }
    Ok(NetRun {
        output,
        transcript,
        elapsed,
        packets_sent: master.packets_sent(),
        service_estimates: (0..n).map(|w| master.estimator().mean(w)).collect(),
    })
}

fn rearm(master: &MasterState, peer: &mut Peer, w: usize, now: f64) {
    if !peer.alive {
        peer.next_dispatch = None;
        return;
    }
    let returned = peer.latest_returned.then_some(now);
    peer.next_dispatch = match master.dispatch_time(w, now, peer.last_sent, returned) {
        Dispatch::At(t) => Some(t),
        Dispatch::AwaitResult => None,
    };
}

/// [`GroupRunner`] over two sets of networked workers.
pub struct NetGroups {
    pub endpoints: [Vec<String>; 2],
    pub opts: NetMasterOptions,
    pub runs: Vec<NetRun>,
}

impl GroupRunner for NetGroups {
    fn run(&mut self, group: usize, spec: GroupSpec, a: &FieldMatrix, v: &[u8]) -> Result<Vec<u8>> {
        if self.endpoints[group].len() != spec.n {
            return Err(domain(format!(
                "group {} has {} endpoints, expected {}",
                group + 1,
                self.endpoints[group].len(),
                spec.n
            )));
        }
        let mut opts = self.opts.clone();
        opts.z = spec.z;
        opts.seed = prac_seed(self.opts.seed, group);
        let run = run_master(&self.endpoints[group], a, v, &opts)?;
        let out = run.output.as_bytes().to_vec();
        self.runs.push(run);
        Ok(out)
    }
}

fn prac_seed(seed: u64, group: usize) -> u64 {
    crate::simulate::mix_seed(seed, group as u64 + 1)
}
