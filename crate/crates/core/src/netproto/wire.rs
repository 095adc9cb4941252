//! Frames: 4-byte big-endian payload length, 1-byte type, payload.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::fountain::FountainSpec;
use crate::gf256::FieldMatrix;

pub const HELLO: u8 = 0x01;
pub const VECTOR_X: u8 = 0x02;
pub const PACKET: u8 = 0x03;
pub const ACK_RECEIPT: u8 = 0x04;
pub const RESULT: u8 = 0x05;
pub const STOP: u8 = 0x06;

/// Frames larger than this are rejected as malformed.
pub const MAX_FRAME: usize = 1 << 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.push(self.msg_type);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Frame> {
        if buf.len() < 5 {
            return Err(Error::Protocol("frame shorter than its header".into()));
        }
        let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
        if buf.len() != 5 + len {
            return Err(Error::Protocol(format!(
                "frame declares {len} payload bytes, has {}",
                buf.len() - 5
            )));
        }
        check_type(buf[4])?;
        Ok(Frame { msg_type: buf[4], payload: buf[5..].to_vec() })
    }
}

fn check_type(t: u8) -> Result<()> {
    if (HELLO..=STOP).contains(&t) {
        Ok(())
    } else {
        Err(Error::Protocol(format!("unknown frame type 0x{t:02x}")))
    }
}

/// Read one frame; `Ok(None)` on a clean end of stream before any header
/// byte.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>> {
    let mut header = [0u8; 5];
    let mut got = 0;
    while got < 5 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a frame header".into())),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds limit")));
    }
    check_type(header[4])?;
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Protocol("stream ended inside a frame".into()),
        _ => e.into(),
    })?;
    Ok(Some(Frame { msg_type: header[4], payload }))
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()?;
    Ok(())
}

/// What a `PACKET` carries besides its payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WireKind {
    Key { key_index: u8 },
    Secure { g_row: u8, spec: FountainSpec },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PacketWire {
    pub round: u32,
    pub slot: u8,
    pub kind: WireKind,
    pub payload: FieldMatrix,
}

impl PacketWire {
    pub fn from_packet(p: &crate::prac::Packet) -> Result<PacketWire> {
        let byte = |v: usize, what: &str| {
            u8::try_from(v).map_err(|_| Error::Protocol(format!("{what} {v} does not fit in a byte")))
        };
        let kind = match &p.kind {
            crate::prac::PacketKind::Key { key_index } => WireKind::Key { key_index: byte(*key_index, "key index")? },
            crate::prac::PacketKind::Secure { spec, g_row } => WireKind::Secure {
                g_row: byte(*g_row, "generator row")?,
                spec: spec.clone(),
            },
        };
        Ok(PacketWire { round: p.round, slot: byte(p.slot, "slot")?, kind, payload: p.payload.clone() })
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.round.to_be_bytes());
        out.push(self.slot);
        match &self.kind {
            WireKind::Key { key_index } => {
                out.push(0);
                out.push(*key_index);
            }
            WireKind::Secure { g_row, spec } => {
                out.push(1);
                out.push(*g_row);
                spec.write_bytes(out);
            }
        }
        self.payload.write_bytes(out);
    }

    pub fn read_bytes(buf: &[u8]) -> Result<PacketWire> {
        let short = || Error::Protocol("truncated packet".into());
        if buf.len() < 7 {
            return Err(short());
        }
        let round = u32::from_be_bytes(buf[..4].try_into().unwrap());
        let slot = buf[4];
        let (kind, rest) = match buf[5] {
            0 => (WireKind::Key { key_index: buf[6] }, &buf[7..]),
            1 => {
                let (spec, used) = FountainSpec::read_bytes(&buf[7..]).map_err(|e| Error::Protocol(e.to_string()))?;
                (WireKind::Secure { g_row: buf[6], spec }, &buf[7 + used..])
            }
            k => return Err(Error::Protocol(format!("unknown packet kind {k}"))),
        };
        let (payload, used) = FieldMatrix::read_bytes(rest).map_err(|e| Error::Protocol(e.to_string()))?;
        if used != rest.len() {
            return Err(Error::Protocol("trailing bytes after packet payload".into()));
        }
        Ok(PacketWire { round, slot, kind, payload })
    }
}

/// A decoded frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Hello { seq: u32 },
    VectorX(FieldMatrix),
    Packet(PacketWire),
    AckReceipt { round: u32, slot: u8 },
    Result { round: u32, slot: u8, result: FieldMatrix },
    Stop,
}

impl Message {
    pub fn to_frame(&self) -> Frame {
        let mut payload = Vec::new();
        let msg_type = match self {
            Message::Hello { seq } => {
                payload.extend_from_slice(&seq.to_be_bytes());
                HELLO
            }
            Message::VectorX(x) => {
                x.write_bytes(&mut payload);
                VECTOR_X
            }
            Message::Packet(p) => {
                p.write_bytes(&mut payload);
                PACKET
            }
            Message::AckReceipt { round, slot } => {
                payload.extend_from_slice(&round.to_be_bytes());
                payload.push(*slot);
                ACK_RECEIPT
            }
            Message::Result { round, slot, result } => {
                payload.extend_from_slice(&round.to_be_bytes());
                payload.push(*slot);
                result.write_bytes(&mut payload);
                RESULT
            }
            Message::Stop => STOP,
        };
        Frame { msg_type, payload }
    }

    pub fn from_frame(f: &Frame) -> Result<Message> {
        let p = &f.payload;
        let exact = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Protocol(format!("frame type 0x{:02x} needs {n} payload bytes, got {}", f.msg_type, p.len())))
            }
        };
        let matrix = |buf: &[u8]| -> Result<FieldMatrix> {
            FieldMatrix::from_bytes(buf).map_err(|e| Error::Protocol(e.to_string()))
        };
        match f.msg_type {
            HELLO => {
                exact(4)?;
                Ok(Message::Hello { seq: u32::from_be_bytes(p[..4].try_into().unwrap()) })
            }
            VECTOR_X => Ok(Message::VectorX(matrix(p)?)),
            PACKET => Ok(Message::Packet(PacketWire::read_bytes(p)?)),
            ACK_RECEIPT => {
                exact(5)?;
                Ok(Message::AckReceipt { round: u32::from_be_bytes(p[..4].try_into().unwrap()), slot: p[4] })
            }
            RESULT => {
                if p.len() < 5 {
                    return Err(Error::Protocol("truncated result".into()));
                }
                Ok(Message::Result {
                    round: u32::from_be_bytes(p[..4].try_into().unwrap()),
                    slot: p[4],
                    result: matrix(&p[5..])?,
                })
            }
            STOP => {
                exact(0)?;
                Ok(Message::Stop)
            }
            t => Err(Error::Protocol(format!("unknown frame type 0x{t:02x}"))),
        }
    }
}

pub fn send<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    write_frame(w, &msg.to_frame())
}

/// Read and decode one message; `Ok(None)` on a clean end of stream.
pub fn recv<R: Read>(r: &mut R) -> Result<Option<Message>> {
    read_frame(r)?.map(|f| Message::from_frame(&f)).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> Vec<(Message, Vec<u8>)> {
        let m = FieldMatrix::from_rows(&[vec![0xAB, 0x01]]).unwrap();
        vec![
            (Message::Hello { seq: 7 }, vec![0, 0, 0, 4, 0x01, 0, 0, 0, 7]),
            (
                Message::VectorX(FieldMatrix::column(vec![5, 6])),
                vec![0, 0, 0, 10, 0x02, 0, 0, 0, 2, 0, 0, 0, 1, 5, 6],
            ),
            (
                Message::Packet(PacketWire { round: 3, slot: 2, kind: WireKind::Key { key_index: 2 }, payload: m.clone() }),
                vec![0, 0, 0, 17, 0x03, 0, 0, 0, 3, 2, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0xAB, 0x01],
            ),
            (
                Message::Packet(PacketWire {
                    round: 1,
                    slot: 4,
                    kind: WireKind::Secure { g_row: 4, spec: FountainSpec::new(vec![2, 5], 6).unwrap() },
                    payload: m.clone(),
                }),
                vec![
                    0, 0, 0, 27, 0x03, 0, 0, 0, 1, 4, 1, 4, 0, 2, 0, 0, 0, 2, 0, 0, 0, 5, 0, 0, 0, 1, 0, 0, 0, 2,
                    0xAB, 0x01,
                ],
            ),
            (Message::AckReceipt { round: 258, slot: 9 }, vec![0, 0, 0, 5, 0x04, 0, 0, 1, 2, 9]),
            (
                Message::Result { round: 1, slot: 1, result: FieldMatrix::column(vec![0x42]) },
                vec![0, 0, 0, 14, 0x05, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0x42],
            ),
            (Message::Stop, vec![0, 0, 0, 0, 0x06]),
        ]
    }

    #[test]
    fn golden_frames() {
        for (msg, bytes) in golden() {
            assert_eq!(msg.to_frame().encode(), bytes, "{msg:?}");
            let frame = Frame::decode(&bytes).unwrap();
            assert_eq!(Message::from_frame(&frame).unwrap(), msg);
            let mut cursor = &bytes[..];
            assert_eq!(recv(&mut cursor).unwrap(), Some(msg));
            assert_eq!(recv(&mut cursor).unwrap(), None);
        }
    }

    #[test]
    fn malformed_frames() {
        assert!(Frame::decode(&[0, 0, 0, 1, 0x01]).is_err());
        assert!(Frame::decode(&[0, 0, 0, 0, 0x07]).is_err());
        let mut truncated: &[u8] = &[0, 0, 0, 4, 0x01, 0];
        assert!(matches!(recv(&mut truncated), Err(Error::Protocol(_))));
        let bad_hello = Frame { msg_type: HELLO, payload: vec![1] };
        assert!(Message::from_frame(&bad_hello).is_err());
        let bad_kind = Frame { msg_type: PACKET, payload: vec![0, 0, 0, 1, 1, 9, 0, 0, 0, 0, 0, 0, 0, 0] };
        assert!(Message::from_frame(&bad_kind).is_err());
    }

    proptest! {
        #[test]
        fn packet_round_trip(
            round in any::<u32>(),
            slot in 1u8..=255,
            secure in any::<bool>(),
            raw in proptest::collection::btree_set(0u32..64, 1..8),
            rows in 1usize..5,
            cols in 1usize..5,
            seed in any::<u64>(),
        ) {
            let data: Vec<u8> = (0..rows * cols).map(|i| (seed >> (i % 57)) as u8 ^ i as u8).collect();
            let payload = FieldMatrix::new(rows, cols, data).unwrap();
            let kind = if secure {
                WireKind::Secure { g_row: slot, spec: FountainSpec::new(raw.into_iter().collect(), 64).unwrap() }
            } else {
                WireKind::Key { key_index: slot }
            };
            let msg = Message::Packet(PacketWire { round, slot, kind, payload });
            let bytes = msg.to_frame().encode();
            prop_assert_eq!(Message::from_frame(&Frame::decode(&bytes).unwrap()).unwrap(), msg);
        }
    }
}
