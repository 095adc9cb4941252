//! Master/worker runtime over TCP.
//!
//! The master sends `x` once, then streams packets; each worker answers a
//! packet with an immediate `ACK_RECEIPT` and, after computing and waiting
//! out its artificial delay, a `RESULT`. `HELLO` frames measure the round
//! trip and check per-connection ordering. `STOP` ends the session.

mod master;
mod wire;
mod worker;

pub use master::{
    run_master, Direction, NetGroups, NetMasterOptions, NetRun, Transcript, TranscriptEntry, HELLO_EVERY,
};
pub use wire::{
    read_frame, recv, send, write_frame, Frame, Message, PacketWire, WireKind, ACK_RECEIPT, HELLO, MAX_FRAME,
    PACKET, RESULT, STOP, VECTOR_X,
};
pub use worker::{run_worker, serve, DelayModel, WorkerStats};
