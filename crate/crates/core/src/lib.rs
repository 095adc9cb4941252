//! Private, rateless, adaptive coded matrix-vector multiplication.
//!
//! A master holding `A` and `x` streams fountain-coded row blocks of `A` to
//! workers, padding each with keys drawn fresh every round and mixed through
//! a systematic MDS generator, so that no `z` colluding workers learn
//! anything about `A`. Packets are paced per worker from measured service
//! times, and `A x` is decoded once enough unpadded results are in.

pub mod error;
pub mod fountain;
pub mod gf256;
pub mod keycode;
pub mod netproto;
pub mod prac;
pub mod simulate;

pub use error::{Error, Result};
pub use fountain::{DegreeDistribution, FountainSpec, PeelingDecoder};
pub use gf256::{FieldElement, FieldMatrix};
pub use keycode::{KeyGenerator, RoundKeys};
pub use prac::{Dispatch, MasterOptions, MasterState, Packet, PacketKind, ResultMsg};
pub use simulate::{CompletionRecord, Scheme, SimConfig};
