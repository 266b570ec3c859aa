use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::MsgKind;
use crate::party::PartyId;
use crate::ring::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ChannelKey {
    pub from: PartyId,
    pub to: PartyId,
    pub phase: Phase,
    pub kind: MsgKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counter {
    pub elements: u64,
    pub bytes: u64,
    pub messages: u64,
}

impl Counter {
    fn add(&mut self, o: &Counter) {
        self.elements += o.elements;
        self.bytes += o.bytes;
        self.messages += o.messages;
    }
}

/// Sender-side traffic counters. Rounds are the number of distinct
/// communication steps in which a channel carried at least one message.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    counters: BTreeMap<ChannelKey, Counter>,
    steps: BTreeMap<ChannelKey, BTreeSet<u64>>,
    step: u64,
}

impl Metrics {
    pub fn new() -> Metrics {
        Metrics::default()
    }

    pub fn record(&mut self, from: PartyId, to: PartyId, phase: Phase, kind: MsgKind, elements: u64, bytes: u64) {
        let key = ChannelKey { from, to, phase, kind };
        let c = self.counters.entry(key).or_default();
        c.elements += if kind.is_overhead() { 0 } else { elements };
        c.bytes += bytes;
        c.messages += 1;
        self.steps.entry(key).or_default().insert(self.step);
    }

    pub fn next_round(&mut self) {
        self.step += 1;
    }

    /// Adds another party's counters. Rounds stay per sender, so step sets of
    /// different senders never collide.
    pub fn merge(&mut self, other: &Metrics) {
        for (k, c) in &other.counters {
            self.counters.entry(*k).or_default().add(c);
        }
        for (k, s) in &other.steps {
            self.steps.entry(*k).or_default().extend(s.iter().copied());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChannelKey, &Counter)> {
        self.counters.iter()
    }

    pub fn total(&self, pred: impl Fn(&ChannelKey) -> bool) -> Counter {
        let mut t = Counter::default();
        for (k, c) in &self.counters {
            if pred(k) {
                t.add(c);
            }
        }
        t
    }

    pub fn elements(&self, pred: impl Fn(&ChannelKey) -> bool) -> u64 {
        self.total(pred).elements
    }

    /// Rounds on one directed channel, counting only keys that match `pred`.
    pub fn rounds(&self, from: PartyId, to: PartyId, pred: impl Fn(&ChannelKey) -> bool) -> u64 {
        let mut all = BTreeSet::new();
        for (k, s) in &self.steps {
            if k.from == from && k.to == to && pred(k) {
                all.extend(s.iter().copied());
            }
        }
        all.len() as u64
    }

    /// Multiplication traffic per directed channel.
    pub fn mul_traffic(&self) -> MulTraffic {
        let mut t = MulTraffic::default();
        for (k, c) in &self.counters {
            if k.kind.is_mul() {
                let e = t.per_channel.entry((k.from, k.to)).or_default();
                match k.phase {
                    Phase::Offline => e.0 += c.elements,
                    Phase::Online => e.1 += c.elements,
                }
            }
        }
        t
    }

    pub fn channels(&self) -> BTreeSet<(PartyId, PartyId)> {
        self.counters.keys().map(|k| (k.from, k.to)).collect()
    }

    /// Human-readable table, one row per directed channel and phase.
    pub fn table(&self, mul_gates: u64) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<8} {:<8} {:>10} {:>10} {:>10} {:>8} {:>8} {:>10}",
            "channel", "phase", "mul-elems", "all-elems", "bytes", "msgs", "rounds", "per-gate"
        );
        let mut rows: BTreeMap<(PartyId, PartyId, Phase), (u64, Counter)> = BTreeMap::new();
        for (k, c) in &self.counters {
            let row = rows.entry((k.from, k.to, k.phase)).or_default();
            if k.kind.is_mul() {
                row.0 += c.elements;
            }
            row.1.add(c);
        }
        for ((from, to, phase), (mul, c)) in rows {
            let rounds = self.rounds(from, to, |k| k.phase == phase);
            let per_gate = if mul_gates == 0 { 0.0 } else { mul as f64 / mul_gates as f64 };
            let _ = writeln!(
                s,
                "{:<8} {:<8} {:>10} {:>10} {:>10} {:>8} {:>8} {:>10.4}",
                format!("{from}->{to}"),
                format!("{phase:?}").to_lowercase(),
                mul,
                c.elements,
                c.bytes,
                c.messages,
                rounds,
                per_gate
            );
        }
        s
    }

    /// Machine-readable dump.
    pub fn to_json(&self, mul_gates: u64) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .counters
            .iter()
            .map(|(k, c)| {
                serde_json::json!({
                    "from": k.from.to_string(),
                    "to": k.to.to_string(),
                    "phase": format!("{:?}", k.phase).to_lowercase(),
                    "kind": k.kind.name(),
                    "elements": c.elements,
                    "bytes": c.bytes,
                    "messages": c.messages,
                    "rounds": self.steps.get(k).map_or(0, |s| s.len()),
                })
            })
            .collect();
        let mul = self.mul_traffic();
        serde_json::json!({
            "mul_gates": mul_gates,
            "mul_offline": mul.offline(),
            "mul_online": mul.online(),
            "active_offline": mul.active(Phase::Offline).len(),
            "active_online": mul.active(Phase::Online).len(),
            "channels": rows,
        })
    }
}

/// Multiplication elements per directed channel as `(offline, online)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MulTraffic {
    pub per_channel: BTreeMap<(PartyId, PartyId), (u64, u64)>,
}

impl MulTraffic {
    pub fn offline(&self) -> u64 {
        self.per_channel.values().map(|v| v.0).sum()
    }

    pub fn online(&self) -> u64 {
        self.per_channel.values().map(|v| v.1).sum()
    }

    pub fn get(&self, from: PartyId, to: PartyId) -> (u64, u64) {
        self.per_channel.get(&(from, to)).copied().unwrap_or_default()
    }

    pub fn active(&self, phase: Phase) -> Vec<(PartyId, PartyId)> {
        self.per_channel
            .iter()
            .filter(|(_, v)| match phase {
                Phase::Offline => v.0 > 0,
                Phase::Online => v.1 > 0,
            })
            .map(|(k, _)| *k)
            .collect()
    }
}
