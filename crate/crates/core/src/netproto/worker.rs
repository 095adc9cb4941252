//! Worker runtime: acknowledge, compute, wait out the artificial delay,
//! return the result, until STOP.

use std::collections::VecDeque;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::wire::{self, Message, PacketWire};
use crate::error::{domain, Error, Result};
use crate::gf256::FieldMatrix;

/// Extra time a worker holds each result before sending it.
#[derive(Clone, Debug)]
pub enum DelayModel {
    None,
    Exponential { mean: Duration, seed: u64 },
}

impl DelayModel {
    pub fn exponential(mean_secs: f64, seed: u64) -> Result<DelayModel> {
        if !(mean_secs.is_finite() && mean_secs > 0.0) {
            return Err(domain(format!("delay mean {mean_secs} must be positive")));
        }
        Ok(DelayModel::Exponential { mean: Duration::from_secs_f64(mean_secs), seed })
    }

    /// An endless sequence of delays.
    pub fn sampler(&self) -> Box<dyn FnMut() -> Duration + Send> {
        match *self {
            DelayModel::None => Box::new(|| Duration::ZERO),
            DelayModel::Exponential { mean, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let exp = Exp::new(1.0 / mean.as_secs_f64()).expect("positive mean");
                Box::new(move || Duration::from_secs_f64(exp.sample(&mut rng)))
            }
        }
    }
}

/// Counters from one worker session.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkerStats {
    pub packets: usize,
    pub results_sent: usize,
    /// Packets received but never answered because STOP came first.
    pub discarded: usize,
    pub total_delay: Duration,
}

enum Inbound {
    Vector(FieldMatrix),
    Packet(PacketWire),
    Stop,
    Closed(Option<Error>),
}

/// Accept one master connection on `listener` and serve it until STOP.
pub fn run_worker(listener: &TcpListener, delay: &DelayModel) -> Result<WorkerStats> {
    let (stream, peer) = listener.accept()?;
    log::info!("master connected from {peer}");
    serve(stream, delay)
}

/// Serve an established master connection until STOP.
pub fn serve(stream: TcpStream, delay: &DelayModel) -> Result<WorkerStats> {
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let (tx, rx) = mpsc::channel();

    let ack_writer = Arc::clone(&writer);
    let mut reader = stream;
    let reader_thread = thread::spawn(move || {
        let reply = |msg: &Message| -> Result<()> {
            let mut w = ack_writer.lock().expect("writer lock");
            wire::send(&mut *w, msg)
        };
        loop {
            let inbound = match wire::recv(&mut reader) {
                Ok(Some(Message::Hello { seq })) => match reply(&Message::Hello { seq }) {
                    Ok(()) => continue,
                    Err(e) => Inbound::Closed(Some(e)),
                },
                Ok(Some(Message::VectorX(x))) => Inbound::Vector(x),
                Ok(Some(Message::Packet(p))) => match reply(&Message::AckReceipt { round: p.round, slot: p.slot }) {
                    Ok(()) => Inbound::Packet(p),
                    Err(e) => Inbound::Closed(Some(e)),
                },
                Ok(Some(Message::Stop)) => Inbound::Stop,
                Ok(Some(other)) => Inbound::Closed(Some(Error::Protocol(format!("unexpected frame from master: {other:?}")))),
                Ok(None) => Inbound::Closed(None),
                Err(e) => Inbound::Closed(Some(e)),
            };
            let last = matches!(inbound, Inbound::Stop | Inbound::Closed(_));
            if tx.send(inbound).is_err() || last {
                return;
            }
        }
    });

    let result = compute_loop(&rx, &writer, delay);
    if let Ok(w) = writer.lock() {
        let _ = w.shutdown(std::net::Shutdown::Both);
    }
    let _ = reader_thread.join();
    result
}

fn compute_loop(rx: &mpsc::Receiver<Inbound>, writer: &Mutex<TcpStream>, delay: &DelayModel) -> Result<WorkerStats> {
    let mut stats = WorkerStats::default();
    let mut next_delay = delay.sampler();
    let mut x: Option<Vec<u8>> = None;
    let mut backlog: VecDeque<Inbound> = VecDeque::new();
    loop {
        let msg = match backlog.pop_front() {
            Some(m) => m,
            None => rx.recv().unwrap_or(Inbound::Closed(None)),
        };
        match msg {
            Inbound::Vector(v) => {
                if v.cols() != 1 {
                    return Err(Error::Protocol(format!("x must be a column, got {:?}", v.shape())));
                }
                x = Some(v.into_bytes());
            }
            Inbound::Packet(p) => {
                stats.packets += 1;
                let Some(xv) = x.as_deref() else {
                    return Err(Error::Protocol("PACKET before VECTOR_X".into()));
                };
                if p.payload.cols() != xv.len() {
                    return Err(Error::Protocol(format!(
                        "packet has {} columns, x has {} entries",
                        p.payload.cols(),
                        xv.len()
                    )));
                }
                let result = FieldMatrix::column(p.payload.mul_slice(xv));
                let d = next_delay();
                let until = Instant::now() + d;
                // Wait out the delay, keeping anything that arrives meanwhile.
                loop {
                    let now = Instant::now();
                    if now >= until {
                        break;
                    }
                    match rx.recv_timeout(until - now) {
                        Ok(Inbound::Stop) => {
                            stats.discarded += 1 + backlog.iter().filter(|m| matches!(m, Inbound::Packet(_))).count();
                            return Ok(stats);
                        }
                        Ok(m) => backlog.push_back(m),
                        Err(RecvTimeoutError::Timeout) => break,
                        Err(RecvTimeoutError::Disconnected) => {
                            backlog.push_back(Inbound::Closed(None));
                            break;
                        }
                    }
                }
                stats.total_delay += d;
                let sent = {
                    let mut w = writer.lock().expect("writer lock");
                    wire::send(&mut *w, &Message::Result { round: p.round, slot: p.slot, result })
                };
                if let Err(e) = sent {
                    // A master that already sent STOP may hang up first.
                    if stop_pending(rx, &backlog) {
                        stats.discarded += 1;
                        return Ok(stats);
                    }
                    return Err(e);
                }
                stats.results_sent += 1;
            }
            Inbound::Stop => {
                stats.discarded += backlog.iter().filter(|m| matches!(m, Inbound::Packet(_))).count();
                return Ok(stats);
            }
            Inbound::Closed(None) => return Err(Error::Protocol("master closed the connection before STOP".into())),
            Inbound::Closed(Some(e)) => return Err(e),
        }
    }
}

fn stop_pending(rx: &mpsc::Receiver<Inbound>, backlog: &VecDeque<Inbound>) -> bool {
    if backlog.iter().any(|m| matches!(m, Inbound::Stop)) {
        return true;
    }
    // The reader thread ends with STOP or a close, so this cannot block for long.
    rx.iter().any(|m| matches!(m, Inbound::Stop))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_delay_mean() {
        let mut s = DelayModel::exponential(3.0, 1).unwrap().sampler();
        let mean = (0..100).map(|_| s().as_secs_f64()).sum::<f64>() / 100.0;
        assert!((mean - 3.0).abs() < 0.6, "{mean}");
        let mut s = DelayModel::None.sampler();
        assert_eq!(s(), Duration::ZERO);
        assert!(DelayModel::exponential(0.0, 1).is_err());
    }
}
