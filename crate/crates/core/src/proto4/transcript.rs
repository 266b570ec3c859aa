//! Values two parties expect to agree on, hashed per peer.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::party::PartyId;
use crate::ring::{encode, Ring};
use crate::session::Check;

#[derive(Default, Clone)]
struct Log {
    hash: Sha256,
    checks: Vec<Check>,
}

/// One party's transcript: a running SHA-256 per peer over
/// `tag (u32 LE) || gate id (u32 LE) || element`, reset at each checkpoint.
#[derive(Default, Clone)]
pub struct Transcript {
    logs: BTreeMap<PartyId, Log>,
}

impl Transcript {
    pub fn new() -> Transcript {
        Transcript::default()
    }

    pub fn log<R: Ring>(&mut self, peer: PartyId, check: Check, id: u32, v: R) {
        let l = self.logs.entry(peer).or_default();
        l.hash.update(check.tag().to_le_bytes());
        l.hash.update(id.to_le_bytes());
        l.hash.update(encode(v));
        if !l.checks.contains(&check) {
            l.checks.push(check);
        }
    }

    pub fn peers(&self) -> Vec<PartyId> {
        self.logs.keys().copied().collect()
    }

    /// Digests of every peer with entries since the last flush; clears them.
    pub fn flush(&mut self) -> BTreeMap<PartyId, ([u8; 32], Vec<Check>)> {
        std::mem::take(&mut self.logs)
            .into_iter()
            .map(|(p, l)| (p, (l.hash.finalize().into(), l.checks)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::Zk;
    use PartyId::*;

    #[test]
    fn digest_is_sha256_of_canonical_entries() {
        let mut t = Transcript::new();
        t.log(P2, Check::V23, 7, Zk(0x0102u16));
        let mut want = Vec::new();
        want.extend(Check::V23.tag().to_le_bytes());
        want.extend(7u32.to_le_bytes());
        want.extend([2u8, 1]);
        let d = t.flush();
        assert_eq!(d[&P2].0, <[u8; 32]>::from(Sha256::digest(&want)));
        assert!(t.flush().is_empty());
    }

    #[test]
    fn equal_views_equal_digests() {
        let (mut a, mut b) = (Transcript::new(), Transcript::new());
        for i in 0..50u32 {
            a.log(P3, Check::O1, i, Zk(i as u64 * 3));
            b.log(P1, Check::O1, i, Zk(i as u64 * 3));
        }
        assert_eq!(a.flush()[&P3].0, b.flush()[&P1].0);
        a.log(P3, Check::O1, 0, Zk(1u64));
        b.log(P1, Check::O1, 0, Zk(2u64));
        assert_ne!(a.flush()[&P3].0, b.flush()[&P1].0);
    }
}
