//! Output reconstruction where either every honest party learns the output
//! or every honest party aborts.
//!
//! 1. Each recipient gets a salted hash of its unmasking values from two
//!    independent holders, plus from every peer a hash of the abort
//!    authenticator `r_{-i}` (drawn from the tape of the three other parties).
//! 2. Every party sends proceed or abort; an abort to `P_i` carries `r_{-i}`,
//!    which `P_i` checks against the majority of the hashes it got.
//! 3. A party that accepted an abort relays it with `r_{-i}`, which every
//!    receiver holds and can check. Unauthenticated aborts are ignored.
//!
//! Only after unanimous proceed are the values themselves sent.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::engine::{verdict_payload, Engine, VERDICT_ABORT, VERDICT_PROCEED};
use crate::circuit::GateId;
use crate::party::{PartyId, Role, COMPUTE_PARTIES};
use crate::ring::{decode_batch, encode_batch, Phase, Ring};
use crate::session::{ProtocolError, Session};
use crate::tape::{DomainTag, KeySet, KeyStore, Purpose};
use crate::transport::tamper::AbortForger;
use crate::transport::{Frame, MsgKind};

type Hash = [u8; 32];

/// Frame ids of the three rounds, fixed so scenarios can target them.
pub const FAIR_COMMIT_ID: u32 = 0xfa17_0001;
pub const FAIR_ROUND_A: u32 = 0xfa17_0002;
pub const FAIR_ROUND_B: u32 = 0xfa17_0003;

fn others(i: PartyId) -> KeySet {
    let rest: Vec<PartyId> = COMPUTE_PARTIES.iter().copied().filter(|p| *p != i).collect();
    KeySet::of(&rest)
}

fn auth_tag(instance: u16, id: u32) -> DomainTag {
    DomainTag::new(DomainTag::PROTO4, Purpose::AbortAuth, instance, id)
}

/// Authenticator that lets `P_i` accept an abort.
fn auth_value(keys: &KeyStore, instance: u16, i: PartyId) -> Result<[u8; 8], ProtocolError> {
    let r: crate::ring::Zk<u64> = keys.draw(others(i), auth_tag(instance, FAIR_ROUND_A), 0)?;
    Ok(r.to_u64().to_le_bytes())
}

fn sha(parts: &[&[u8]]) -> Hash {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// Verdict forger for a corrupted party in the harness: builds an abort to
/// `to` carrying the right authenticator or a wrong one.
pub fn abort_forger(p: PartyId, seed: &[u8; 16]) -> Option<AbortForger> {
    if !COMPUTE_PARTIES.contains(&p) {
        return None;
    }
    let keys = KeyStore::from_master(p, seed);
    Some(Box::new(move |to, id, valid| {
        let mut r = auth_value(&keys, 0, to).unwrap_or([0; 8]);
        if !valid {
            r[0] ^= 0x5a;
        }
        verdict_payload(VERDICT_ABORT, id, Some(&r))
    }))
}

impl<'a, R: Ring> Engine<'a, R> {
    /// Holders of the unmasking values for a recipient and the index of the
    /// value in each holder's record.
    fn holders(recipient: Role) -> [(Role, usize); 2] {
        match recipient {
            Role::R4 => [(Role::R1, 1), (Role::R2, 1)],
            Role::R3 => [(Role::R2, 0), (Role::R4, 1)],
            _ => [(Role::R3, 0), (Role::R4, 2)],
        }
    }

    /// Values this party holds for `to`'s outputs, with their salt.
    fn fair_batch(&self, s: &Session, to: PartyId) -> Result<Option<(Vec<u8>, Vec<u8>)>, ProtocolError> {
        let base = self.base();
        let me = self.role(&base);
        let rec = base.role_of(to).expect("member");
        let Some(&(_, idx)) = Self::holders(rec).iter().find(|h| h.0 == me) else { return Ok(None) };
        let xs: Vec<R> = self
            .output_gates()
            .iter()
            .filter(|o| o.2.contains(to))
            .map(|o| self.wires[o.1 as usize][0].sh[idx])
            .collect();
        if xs.is_empty() {
            return Ok(None);
        }
        let [h0, h1] = Self::holders(rec).map(|h| base.party(h.0));
        let tag = self.tag(Purpose::Salt, self.checkpoint);
        let set = KeySet::of(&[h0, h1]);
        let mut salt = Vec::with_capacity(16);
        for c in 0..2 {
            let v: crate::ring::Zk<u64> = s.keys.draw(set, tag, c)?;
            salt.extend(v.to_u64().to_le_bytes());
        }
        Ok(Some((salt, encode_batch(&xs))))
    }

    pub(super) fn fair_open(&mut self, s: &mut Session) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
        let base = self.base();
        let me_role = self.role(&base);
        let peers = self.peers();
        let inst = self.inst.instance;
        let cp = self.checkpoint;
        let mine: Vec<(GateId, GateId)> =
            self.output_gates().iter().filter(|o| o.2.contains(self.me)).map(|o| (o.0, o.1)).collect();
        let sources = Self::holders(me_role).map(|h| base.party(h.0));

        // Phase 1: commitments.
        s.round();
        for &q in &peers {
            let mut payload = sha(&[&auth_value(s.keys, inst, q)?]).to_vec();
            if let Some((salt, body)) = self.fair_batch(s, q)? {
                payload.extend(sha(&[&salt, &body]));
            }
            s.send_raw(q, Phase::Online, MsgKind::HashCommit, FAIR_COMMIT_ID, payload)?;
        }
        let mut auth_hashes: Vec<Hash> = Vec::new();
        let mut out_hashes: Vec<Hash> = Vec::new();
        let mut detect = false;
        for &q in &peers {
            let f = s.recv_raw(q, MsgKind::HashCommit)?;
            let want = if sources.contains(&q) && !mine.is_empty() { 64 } else { 32 };
            if f.payload.len() != want {
                detect = true;
                continue;
            }
            auth_hashes.push(f.payload[..32].try_into().expect("32 bytes"));
            if want == 64 {
                out_hashes.push(f.payload[32..].try_into().expect("32 bytes"));
            }
        }
        if out_hashes.len() == 2 && out_hashes[0] != out_hashes[1] {
            detect = true;
        }
        let committed = auth_hashes
            .iter()
            .find(|h| auth_hashes.iter().filter(|g| g == h).count() >= 2)
            .copied();

        // Phase 2: first verdict; aborts carry the receiver's authenticator.
        s.round();
        for &q in &peers {
            let payload = if detect {
                verdict_payload(VERDICT_ABORT, FAIR_ROUND_A, Some(&auth_value(s.keys, inst, q)?))
            } else {
                verdict_payload(VERDICT_PROCEED, FAIR_ROUND_A, None)
            };
            s.send_raw(q, Phase::Online, MsgKind::Verdict, FAIR_ROUND_A, payload)?;
        }
        let mut accepted: Option<Vec<u8>> = None;
        for &q in &peers {
            let f = s.recv_raw(q, MsgKind::Verdict)?;
            if f.payload.first() == Some(&VERDICT_ABORT) && f.payload.len() == 13 {
                let r = &f.payload[5..];
                if committed == Some(sha(&[r])) {
                    accepted = Some(r.to_vec());
                }
            }
        }

        // Phase 3: relay accepted aborts.
        s.round();
        for &q in &peers {
            let payload = match &accepted {
                Some(r) => verdict_payload(VERDICT_ABORT, FAIR_ROUND_B, Some(r)),
                None if detect => verdict_payload(VERDICT_ABORT, FAIR_ROUND_B, None),
                None => verdict_payload(VERDICT_PROCEED, FAIR_ROUND_B, None),
            };
            s.send_raw(q, Phase::Online, MsgKind::Verdict, FAIR_ROUND_B, payload)?;
        }
        let mut relayed = false;
        for &q in &peers {
            let f = s.recv_raw(q, MsgKind::Verdict)?;
            if f.payload.first() == Some(&VERDICT_ABORT)
                && f.payload.len() == 13
                && f.payload[5..] == auth_value(s.keys, inst, q)?
            {
                relayed = true;
            }
        }
        if detect || accepted.is_some() || relayed {
            return Err(ProtocolError::FairAbort);
        }

        // Release.
        s.round();
        for &q in &peers {
            if let Some((salt, body)) = self.fair_batch(s, q)? {
                let count = mine_count(self, q) as u64;
                let mut payload = salt;
                payload.extend(body);
                s.net.send(q, Frame::new(Phase::Online, MsgKind::Reveal, cp, payload), count)?;
            }
        }
        if mine.is_empty() {
            return Ok(BTreeMap::new());
        }
        let mut xs: Option<Vec<R>> = None;
        // One of the two sources is honest; a missing or wrong release from
        // the other is skipped.
        for q in sources {
            let Ok(f) = s.recv_raw(q, MsgKind::Reveal) else { continue };
            if xs.is_none() && f.payload.len() > 16 && out_hashes.first() == Some(&sha(&[&f.payload[..16], &f.payload[16..]])) {
                xs = decode_batch(&f.payload[16..], mine.len()).ok();
            }
        }
        let xs = xs.ok_or(ProtocolError::FairAbort)?;
        let mut result = BTreeMap::new();
        for (&(o, src), x) in mine.iter().zip(xs) {
            let t = self.wires[src as usize][0].sh;
            let v = if me_role == Role::R4 { x - t[2] } else { t[1] - x };
            result.insert(o, v.to_u64());
        }
        Ok(result)
    }
}

fn mine_count<R: Ring>(e: &Engine<'_, R>, q: PartyId) -> usize {
    e.output_gates().iter().filter(|o| o.2.contains(q)).count()
}
