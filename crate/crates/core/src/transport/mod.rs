//! Point-to-point message passing between parties, with framing and
//! per-channel metering.
//!
//! Every party owns one [`Endpoint`]. Sends never block on the receiver;
//! receives block (with a timeout) on the FIFO queue of one peer.

mod metrics;
mod profile;
pub mod sim;
pub mod tamper;
pub mod tcp;

use std::fmt;

use thiserror::Error;

pub use metrics::{ChannelKey, Counter, Metrics, MulTraffic};
pub use profile::{LinkProfile, NetProfile, ProfileError};

use crate::party::PartyId;
use crate::ring::Phase;

/// Message types. The numeric value is the type byte on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum MsgKind {
    /// Masked input value sent by a dealer.
    Share = 1,
    /// Input mask forwarded ahead of time.
    ShareMask = 2,
    Mul3M1 = 3,
    Mul3M2 = 4,
    Mul3M3 = 5,
    O1 = 6,
    O4 = 7,
    M2 = 8,
    M3 = 9,
    M3Prime = 10,
    /// Mask or masked value sent to an output recipient.
    Reveal = 11,
    Digest = 12,
    /// Proceed/abort decision after a check.
    Verdict = 13,
    HashCommit = 14,
    Reshare = 15,
    Convert = 16,
    /// Sent by a party that stops participating.
    Abort = 17,
}

pub const ALL_KINDS: [MsgKind; 17] = [
    MsgKind::Share,
    MsgKind::ShareMask,
    MsgKind::Mul3M1,
    MsgKind::Mul3M2,
    MsgKind::Mul3M3,
    MsgKind::O1,
    MsgKind::O4,
    MsgKind::M2,
    MsgKind::M3,
    MsgKind::M3Prime,
    MsgKind::Reveal,
    MsgKind::Digest,
    MsgKind::Verdict,
    MsgKind::HashCommit,
    MsgKind::Reshare,
    MsgKind::Convert,
    MsgKind::Abort,
];

impl MsgKind {
    pub fn from_u8(b: u8) -> Option<MsgKind> {
        ALL_KINDS.get((b as usize).wrapping_sub(1)).copied()
    }

    /// Messages that carry hashes or control data rather than ring elements.
    pub fn is_overhead(self) -> bool {
        matches!(self, MsgKind::Digest | MsgKind::Verdict | MsgKind::HashCommit | MsgKind::Abort)
    }

    /// Messages of the multiplication sub-protocols.
    pub fn is_mul(self) -> bool {
        matches!(
            self,
            MsgKind::Mul3M1
                | MsgKind::Mul3M2
                | MsgKind::Mul3M3
                | MsgKind::O1
                | MsgKind::O4
                | MsgKind::M2
                | MsgKind::M3
                | MsgKind::M3Prime
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Share => "share",
            MsgKind::ShareMask => "share-mask",
            MsgKind::Mul3M1 => "m1",
            MsgKind::Mul3M2 => "m2/3pc",
            MsgKind::Mul3M3 => "m3/3pc",
            MsgKind::O1 => "o1",
            MsgKind::O4 => "o4",
            MsgKind::M2 => "m2",
            MsgKind::M3 => "m3",
            MsgKind::M3Prime => "m3'",
            MsgKind::Reveal => "reveal",
            MsgKind::Digest => "digest",
            MsgKind::Verdict => "verdict",
            MsgKind::HashCommit => "hash",
            MsgKind::Reshare => "reshare",
            MsgKind::Convert => "convert",
            MsgKind::Abort => "abort",
        }
    }

    pub fn parse(s: &str) -> Option<MsgKind> {
        ALL_KINDS.iter().copied().find(|k| k.name() == s || format!("{k:?}").eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const HEADER_LEN: usize = 10;

/// One framed message: `len:u32 LE | phase:u8 | kind:u8 | id:u32 LE | payload`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub phase: Phase,
    pub kind: MsgKind,
    /// Layer, checkpoint or round number, depending on the kind.
    pub id: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame truncated: need {need} bytes, got {got}")]
    Truncated { need: usize, got: usize },
    #[error("bad phase byte {0}")]
    Phase(u8),
    #[error("bad message type byte {0}")]
    Kind(u8),
}

impl Frame {
    pub fn new(phase: Phase, kind: MsgKind, id: u32, payload: Vec<u8>) -> Frame {
        Frame { phase, kind, id, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(match self.phase {
            Phase::Offline => 0,
            Phase::Online => 1,
        });
        out.push(self.kind as u8);
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses the 10-byte header; returns `(payload_len, phase, kind, id)`.
    pub fn decode_header(h: &[u8]) -> Result<(usize, Phase, MsgKind, u32), FrameError> {
        if h.len() < HEADER_LEN {
            return Err(FrameError::Truncated { need: HEADER_LEN, got: h.len() });
        }
        let len = u32::from_le_bytes(h[0..4].try_into().unwrap()) as usize;
        let phase = match h[4] {
            0 => Phase::Offline,
            1 => Phase::Online,
            b => return Err(FrameError::Phase(b)),
        };
        let kind = MsgKind::from_u8(h[5]).ok_or(FrameError::Kind(h[5]))?;
        let id = u32::from_le_bytes(h[6..10].try_into().unwrap());
        Ok((len, phase, kind, id))
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        let (len, phase, kind, id) = Self::decode_header(bytes)?;
        let need = HEADER_LEN + len;
        if bytes.len() < need {
            return Err(FrameError::Truncated { need, got: bytes.len() });
        }
        Ok(Frame { phase, kind, id, payload: bytes[HEADER_LEN..need].to_vec() })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("no message from {0} before the timeout")]
    Timeout(PartyId),
    #[error("channel to {0} is closed")]
    Closed(PartyId),
    #[error("{0} is not connected to this endpoint")]
    NoRoute(PartyId),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One party's connection to all its peers.
pub trait Endpoint: Send {
    fn me(&self) -> PartyId;

    /// Sends a frame. `elements` is the number of ring elements in the payload;
    /// it only feeds the sender's metrics.
    fn send(&mut self, to: PartyId, frame: Frame, elements: u64) -> Result<(), NetError>;

    /// Next frame from `from`, in send order.
    fn recv(&mut self, from: PartyId) -> Result<Frame, NetError>;

    /// Marks the start of a new communication round for round counting.
    fn next_round(&mut self);

    /// Milliseconds elapsed on this party's clock (virtual for the simulator).
    fn elapsed_ms(&self) -> f64;

    fn metrics(&self) -> &Metrics;
}

impl<E: Endpoint + ?Sized> Endpoint for Box<E> {
    fn me(&self) -> PartyId {
        (**self).me()
    }
    fn send(&mut self, to: PartyId, frame: Frame, elements: u64) -> Result<(), NetError> {
        (**self).send(to, frame, elements)
    }
    fn recv(&mut self, from: PartyId) -> Result<Frame, NetError> {
        (**self).recv(from)
    }
    fn next_round(&mut self) {
        (**self).next_round()
    }
    fn elapsed_ms(&self) -> f64 {
        (**self).elapsed_ms()
    }
    fn metrics(&self) -> &Metrics {
        (**self).metrics()
    }
}
