//! Outgoing-message tampering for a corrupted party.
//!
//! The wrapper sits between a party's protocol code and its endpoint, so the
//! protocol itself has no test hooks. Element-carrying messages are selected
//! by the running index of the element among all elements of that kind this
//! party has sent (optionally only to one peer); for multiplication messages
//! that index is the multiplication gate index. Control messages are selected
//! by frame count instead; any element mutation on them flips the first byte
//! of a verdict (its decision) or the last byte of a hash.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Endpoint, Frame, Metrics, MsgKind, NetError};
use crate::party::PartyId;
use crate::ring::Width;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op", content = "value")]
pub enum Mutation {
    /// Adds a constant to the selected element (flips a bit of control data).
    AddDelta(u64),
    /// Overwrites the selected element.
    Replace(u64),
    /// Suppresses the whole frame containing the selection.
    Drop,
    /// Turns a verdict into an abort carrying an authentication value,
    /// either the correct one or garbage.
    ForgeAbort { valid: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindSel {
    Any,
    #[serde(untagged)]
    Kind(MsgKind),
}

impl KindSel {
    fn matches(self, k: MsgKind) -> bool {
        match self {
            KindSel::Any => true,
            KindSel::Kind(x) => x == k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TamperRule {
    pub kind: KindSel,
    /// Only messages to this peer.
    #[serde(default)]
    pub to: Option<PartyId>,
    /// Element (or frame) index; `None` hits every element.
    #[serde(default)]
    pub index: Option<u64>,
    /// Only frames with this id (layer, checkpoint or round number).
    #[serde(default)]
    pub frame_id: Option<u32>,
    pub mutation: Mutation,
}

impl TamperRule {
    pub fn new(kind: MsgKind, index: Option<u64>, mutation: Mutation) -> TamperRule {
        TamperRule { kind: KindSel::Kind(kind), to: None, index, frame_id: None, mutation }
    }

    pub fn to(mut self, p: PartyId) -> TamperRule {
        self.to = Some(p);
        self
    }

    pub fn frame_id(mut self, id: u32) -> TamperRule {
        self.frame_id = Some(id);
        self
    }

    /// Drops everything the party sends.
    pub fn silence() -> TamperRule {
        TamperRule { kind: KindSel::Any, to: None, index: None, frame_id: None, mutation: Mutation::Drop }
    }
}

/// Builds the payload of an abort verdict addressed to a party; the flag
/// says whether it should carry a valid authentication value.
pub type AbortForger = Box<dyn Fn(PartyId, u32, bool) -> Vec<u8> + Send>;

pub struct TamperEndpoint<E> {
    inner: E,
    width: Width,
    rules: Vec<TamperRule>,
    forge: Option<AbortForger>,
    /// Elements (or frames) already sent per (rule, peer filter).
    seen: HashMap<usize, u64>,
    applied: u64,
}

impl<E: Endpoint> TamperEndpoint<E> {
    pub fn new(inner: E, width: Width, rules: Vec<TamperRule>, forge: Option<AbortForger>) -> Self {
        TamperEndpoint { inner, width, rules, forge, seen: HashMap::new(), applied: 0 }
    }

    /// Number of frames the rules changed or dropped.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

fn element_bytes(width: Width) -> usize {
    (width.bits() as usize).div_ceil(8)
}

fn mutate_element(payload: &mut [u8], width: Width, i: usize, m: Mutation) {
    let mask = width.mask();
    if width == Width::W1 {
        let (byte, bit) = (i / 8, i % 8);
        if byte >= payload.len() {
            return;
        }
        let old = u64::from(payload[byte] >> bit & 1);
        let new = match m {
            Mutation::AddDelta(d) => (old + d) & 1,
            Mutation::Replace(v) => v & 1,
            _ => old,
        };
        payload[byte] = (payload[byte] & !(1 << bit)) | ((new as u8) << bit);
        return;
    }
    let n = element_bytes(width);
    let Some(slot) = payload.get_mut(i * n..(i + 1) * n) else { return };
    let mut buf = [0u8; 8];
    buf[..n].copy_from_slice(slot);
    let old = u64::from_le_bytes(buf);
    let new = match m {
        Mutation::AddDelta(d) => old.wrapping_add(d) & mask,
        Mutation::Replace(v) => v & mask,
        _ => old,
    };
    slot.copy_from_slice(&new.to_le_bytes()[..n]);
}

impl<E: Endpoint> Endpoint for TamperEndpoint<E> {
    fn me(&self) -> PartyId {
        self.inner.me()
    }

    fn send(&mut self, to: PartyId, mut frame: Frame, elements: u64) -> Result<(), NetError> {
        let mut drop = false;
        let mut touched = false;
        for (ri, rule) in self.rules.iter().enumerate() {
            if !rule.kind.matches(frame.kind)
                || rule.to.is_some_and(|p| p != to)
                || rule.frame_id.is_some_and(|id| id != frame.id)
            {
                continue;
            }
            let counted = frame.kind.is_overhead() || frame.kind == MsgKind::Abort;
            let span = if counted { 1 } else { elements };
            let start = *self.seen.entry(ri).or_default();
            self.seen.insert(ri, start + span);
            let hits: Vec<u64> = match rule.index {
                None => (0..span).collect(),
                Some(i) if i >= start && i < start + span => vec![i - start],
                Some(_) => vec![],
            };
            if hits.is_empty() && !(rule.index.is_none() && span == 0) {
                continue;
            }
            match rule.mutation {
                Mutation::Drop => drop = true,
                Mutation::ForgeAbort { valid } => {
                    if frame.kind == MsgKind::Verdict {
                        if let Some(forge) = &self.forge {
                            frame.payload = forge(to, frame.id, valid);
                            touched = true;
                        }
                    }
                }
                _ if counted => {
                    let byte = if frame.kind == MsgKind::Verdict {
                        frame.payload.first_mut()
                    } else {
                        frame.payload.last_mut()
                    };
                    if let Some(b) = byte {
                        *b ^= 1;
                        touched = true;
                    }
                }
                m => {
                    for h in hits {
                        mutate_element(&mut frame.payload, self.width, h as usize, m);
                    }
                    touched = true;
                }
            }
        }
        if drop {
            self.applied += 1;
            return Ok(());
        }
        if touched {
            self.applied += 1;
        }
        self.inner.send(to, frame, elements)
    }

    fn recv(&mut self, from: PartyId) -> Result<Frame, NetError> {
        self.inner.recv(from)
    }

    fn next_round(&mut self) {
        self.inner.next_round()
    }

    fn elapsed_ms(&self) -> f64 {
        self.inner.elapsed_ms()
    }

    fn metrics(&self) -> &Metrics {
        self.inner.metrics()
    }
}
