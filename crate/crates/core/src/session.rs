//! Per-party protocol plumbing: typed batch send/receive over an endpoint,
//! the party's key store and its multiplication meter.

use thiserror::Error;

use crate::party::PartyId;
use crate::ring::{batch_len, decode_batch, encode_batch, MulMeter, Phase, Ring, RingError};
use crate::tape::{DomainTag, KeySet, KeyStore, TapeError};
use crate::transport::{Endpoint, Frame, MsgKind, NetError};

/// Which verification check a logged value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Check {
    /// Input consistency of masked values.
    Input,
    /// `o1` compared between the third evaluator and P4.
    O1,
    /// `m2 - m3 - r` between the two online evaluators.
    V23,
    /// The first evaluator's view against the two online evaluators.
    V1,
    /// The first evaluator's output share against the second's.
    C3,
    /// Revealed masks compared with P4.
    Reveal,
    /// Consistency of converted or reshared values.
    Convert,
}

impl Check {
    pub fn tag(self) -> u32 {
        self as u32 + 1
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("expected a {expected} message from {from}, got {got}")]
    Unexpected { from: PartyId, expected: MsgKind, got: MsgKind },
    #[error("malformed {kind} payload from {from}")]
    Malformed { from: PartyId, kind: MsgKind },
    #[error("{0} aborted")]
    PeerAbort(PartyId),
    #[error("verification failed at checkpoint {checkpoint}: {pairs:?}")]
    CheckFailed { checkpoint: u32, pairs: Vec<(PartyId, PartyId)>, checks: Vec<Check> },
    #[error("{from} reported an abort at checkpoint {checkpoint}")]
    Verdict { checkpoint: u32, from: PartyId },
    #[error("fair reconstruction aborted")]
    FairAbort,
    #[error("resharing check failed")]
    ReshareCheck,
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl ProtocolError {
    /// True if this party detected the problem itself rather than being told.
    pub fn is_detection(&self) -> bool {
        matches!(self, ProtocolError::CheckFailed { .. } | ProtocolError::ReshareCheck)
    }
}

pub struct Session<'a> {
    pub me: PartyId,
    pub net: &'a mut dyn Endpoint,
    pub keys: &'a KeyStore,
    pub meter: MulMeter,
}

impl<'a> Session<'a> {
    pub fn new(net: &'a mut dyn Endpoint, keys: &'a KeyStore) -> Session<'a> {
        Session { me: net.me(), net, keys, meter: MulMeter::default() }
    }

    #[inline]
    pub fn mul<R: Ring>(&mut self, phase: Phase, a: R, b: R) -> R {
        self.meter.mul(phase, a, b)
    }

    pub fn draw<R: Ring>(&self, set: KeySet, tag: DomainTag) -> Result<R, TapeError> {
        self.keys.draw(set, tag, 0)
    }

    pub fn round(&mut self) {
        self.net.next_round();
    }

    /// Sends a batch; empty batches are not sent at all.
    pub fn send<R: Ring>(&mut self, to: PartyId, phase: Phase, kind: MsgKind, id: u32, xs: &[R]) -> Result<(), ProtocolError> {
        if xs.is_empty() || to == self.me {
            return Ok(());
        }
        self.net.send(to, Frame::new(phase, kind, id, encode_batch(xs)), xs.len() as u64)?;
        Ok(())
    }

    pub fn send_raw(&mut self, to: PartyId, phase: Phase, kind: MsgKind, id: u32, payload: Vec<u8>) -> Result<(), ProtocolError> {
        self.net.send(to, Frame::new(phase, kind, id, payload), 0)?;
        Ok(())
    }

    pub fn recv_raw(&mut self, from: PartyId, kind: MsgKind) -> Result<Frame, ProtocolError> {
        let f = self.net.recv(from)?;
        if f.kind == MsgKind::Abort && kind != MsgKind::Abort {
            return Err(ProtocolError::PeerAbort(from));
        }
        if f.kind != kind {
            return Err(ProtocolError::Unexpected { from, expected: kind, got: f.kind });
        }
        Ok(f)
    }

    /// Receives a batch of exactly `n` elements; `n == 0` reads nothing.
    pub fn recv<R: Ring>(&mut self, from: PartyId, kind: MsgKind, n: usize) -> Result<Vec<R>, ProtocolError> {
        if n == 0 || from == self.me {
            return Ok(Vec::new());
        }
        let f = self.recv_raw(from, kind)?;
        if f.payload.len() != batch_len::<R>(n) {
            return Err(ProtocolError::Malformed { from, kind });
        }
        Ok(decode_batch(&f.payload, n)?)
    }

    /// Best-effort notice to the given peers that this party stopped.
    pub fn abort_to(&mut self, peers: &[PartyId], id: u32) {
        for &p in peers {
            if p != self.me {
                let _ = self.net.send(p, Frame::new(Phase::Online, MsgKind::Abort, id, Vec::new()), 0);
            }
        }
    }
}
