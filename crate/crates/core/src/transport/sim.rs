//! In-process network over crossbeam channels with a per-party virtual clock.
//!
//! A message leaves when the sender's clock says so, waits for earlier
//! messages on the same link to finish transmitting, and arrives `latency`
//! later. Receiving advances the receiver's clock to the arrival time.

use std::collections::HashMap;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{Endpoint, Frame, LinkProfile, Metrics, NetError, NetProfile};
use crate::party::PartyId;

struct Packet {
    frame: Frame,
    arrival_ms: f64,
}

struct Link {
    tx: Sender<Packet>,
    profile: LinkProfile,
    busy_until: f64,
}

pub struct SimEndpoint {
    me: PartyId,
    out: HashMap<PartyId, Link>,
    inbox: HashMap<PartyId, Receiver<Packet>>,
    clock_ms: f64,
    timeout: Duration,
    metrics: Metrics,
}

/// Fully connected simulated network among `parties`.
pub fn mesh(parties: &[PartyId], profile: &NetProfile, timeout: Duration) -> Vec<SimEndpoint> {
    let mut eps: Vec<SimEndpoint> = parties
        .iter()
        .map(|&me| SimEndpoint {
            me,
            out: HashMap::new(),
            inbox: HashMap::new(),
            clock_ms: 0.0,
            timeout,
            metrics: Metrics::new(),
        })
        .collect();
    for i in 0..parties.len() {
        for j in 0..parties.len() {
            if i == j {
                continue;
            }
            let (tx, rx) = unbounded();
            let profile = profile.link(parties[i], parties[j]);
            eps[i].out.insert(parties[j], Link { tx, profile, busy_until: 0.0 });
            eps[j].inbox.insert(parties[i], rx);
        }
    }
    eps
}

impl SimEndpoint {
    /// Moves the virtual clock forward, e.g. to model local computation.
    pub fn advance(&mut self, ms: f64) {
        self.clock_ms += ms;
    }
}

impl Endpoint for SimEndpoint {
    fn me(&self) -> PartyId {
        self.me
    }

    fn send(&mut self, to: PartyId, frame: Frame, elements: u64) -> Result<(), NetError> {
        let link = self.out.get_mut(&to).ok_or(NetError::NoRoute(to))?;
        let size = super::HEADER_LEN + frame.payload.len();
        let start = self.clock_ms.max(link.busy_until);
        link.busy_until = start + link.profile.transfer_ms(size);
        let arrival_ms = link.busy_until + link.profile.latency_ms;
        self.metrics.record(self.me, to, frame.phase, frame.kind, elements, frame.payload.len() as u64);
        // A party that already left just never reads it.
        let _ = link.tx.send(Packet { frame, arrival_ms });
        Ok(())
    }

    fn recv(&mut self, from: PartyId) -> Result<Frame, NetError> {
        let rx = self.inbox.get(&from).ok_or(NetError::NoRoute(from))?;
        match rx.recv_timeout(self.timeout) {
            Ok(p) => {
                self.clock_ms = self.clock_ms.max(p.arrival_ms);
                Ok(p.frame)
            }
            Err(RecvTimeoutError::Timeout) => Err(NetError::Timeout(from)),
            Err(RecvTimeoutError::Disconnected) => Err(NetError::Closed(from)),
        }
    }

    fn next_round(&mut self) {
        self.metrics.next_round();
    }

    fn elapsed_ms(&self) -> f64 {
        self.clock_ms
    }

    fn metrics(&self) -> &Metrics {
        &self.metrics
    }
}
