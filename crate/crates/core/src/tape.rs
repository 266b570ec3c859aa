//! Shared randomness tapes.
//!
//! Every subset of parties that shares a 16-byte key can draw identical ring
//! elements without talking to each other. A draw is `AES-128_key(tag || counter)`
//! truncated to the ring width, so distinct `(tag, counter)` pairs never collide
//! as PRF inputs.

use std::collections::BTreeMap;
use std::fmt;

use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::party::{PartyId, Role, RoleMap, ALL_PARTIES};
use crate::ring::Ring;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TapeError {
    #[error("{party} is not a member of key set {set}")]
    NotMember { party: PartyId, set: KeySet },
    #[error("{party} cannot derive mask component x{component}")]
    MissingComponent { party: PartyId, component: u8 },
}

/// A set of parties holding a common key, stored as a bitmask over [`PartyId::index`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeySet(u8);

impl KeySet {
    pub fn of(parties: &[PartyId]) -> KeySet {
        KeySet(parties.iter().fold(0, |m, p| m | p.bit()))
    }

    /// Key set of the parties playing `roles` under `map`.
    pub fn of_roles(map: &RoleMap, roles: &[Role]) -> KeySet {
        KeySet(roles.iter().fold(0, |m, &r| m | map.party(r).bit()))
    }

    pub fn contains(self, p: PartyId) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn members(self) -> impl Iterator<Item = PartyId> {
        ALL_PARTIES.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl fmt::Display for KeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.members().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl fmt::Debug for KeySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// What a draw is used for. Part of the PRF input, so two purposes never share
/// randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    InputMask = 1,
    MulPad = 2,
    OutMaskZ2 = 3,
    OutMaskZ3 = 4,
    Triple = 5,
    AbortAuth = 6,
    Reshare = 7,
    ConvertPad = 8,
    Fresh = 9,
    Salt = 10,
}

/// Domain separation for a tape: protocol, purpose, instance and gate/wire id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainTag {
    pub proto: u8,
    pub purpose: Purpose,
    pub instance: u16,
    pub id: u32,
}

impl DomainTag {
    pub const PROTO3: u8 = 3;
    pub const PROTO4: u8 = 4;

    pub fn new(proto: u8, purpose: Purpose, instance: u16, id: u32) -> DomainTag {
        DomainTag { proto, purpose, instance, id }
    }

    fn block(&self, counter: u64) -> [u8; 16] {
        let mut b = [0u8; 16];
        b[0] = self.proto;
        b[1] = self.purpose as u8;
        b[2..4].copy_from_slice(&self.instance.to_le_bytes());
        b[4..8].copy_from_slice(&self.id.to_le_bytes());
        b[8..16].copy_from_slice(&counter.to_le_bytes());
        b
    }
}

fn prf_u64(cipher: &Aes128, tag: &DomainTag, counter: u64) -> u64 {
    let mut block = tag.block(counter).into();
    cipher.encrypt_block(&mut block);
    u64::from_le_bytes(block[..8].try_into().expect("16-byte block"))
}

/// A sequence of shared draws for one `(key set, tag)`.
pub struct Tape {
    set: KeySet,
    cipher: Aes128,
    tag: DomainTag,
    counter: u64,
}

impl Tape {
    pub fn key_set(&self) -> KeySet {
        self.set
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_element<R: Ring>(&mut self) -> R {
        let v = prf_u64(&self.cipher, &self.tag, self.counter);
        self.counter += 1;
        R::from_u64(v)
    }
}

/// The keys one party holds, indexed by key set.
#[derive(Clone)]
pub struct KeyStore {
    owner: PartyId,
    keys: BTreeMap<KeySet, Aes128>,
}

impl fmt::Debug for KeyStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyStore")
            .field("owner", &self.owner)
            .field("sets", &self.keys.keys().collect::<Vec<_>>())
            .finish()
    }
}

/// Derives the 16-byte key of `set` from a setup seed.
pub fn derive_key(master: &[u8; 16], set: KeySet) -> [u8; 16] {
    let mut h = Sha256::new();
    h.update(b"hetmpc/keyset/v1");
    h.update(master);
    h.update([set.bits()]);
    h.finalize()[..16].try_into().expect("sha256 output is 32 bytes")
}

impl KeyStore {
    /// Keys for every set of at least two parties containing `owner`, all derived
    /// from one setup seed.
    pub fn from_master(owner: PartyId, master: &[u8; 16]) -> KeyStore {
        let keys = (1u8..32)
            .map(KeySet)
            .filter(|s| s.contains(owner) && s.bits().count_ones() >= 2)
            .map(|s| (s, Aes128::new(&derive_key(master, s).into())))
            .collect();
        KeyStore { owner, keys }
    }

    pub fn with_keys(owner: PartyId, keys: impl IntoIterator<Item = (KeySet, [u8; 16])>) -> KeyStore {
        let keys = keys
            .into_iter()
            .filter(|(s, _)| s.contains(owner))
            .map(|(s, k)| (s, Aes128::new(&k.into())))
            .collect();
        KeyStore { owner, keys }
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn holds(&self, set: KeySet) -> bool {
        self.keys.contains_key(&set)
    }

    fn cipher(&self, set: KeySet) -> Result<&Aes128, TapeError> {
        self.keys.get(&set).ok_or(TapeError::NotMember { party: self.owner, set })
    }

    pub fn tape(&self, set: KeySet, tag: DomainTag) -> Result<Tape, TapeError> {
        Ok(Tape { set, cipher: self.cipher(set)?.clone(), tag, counter: 0 })
    }

    /// Single draw at a fixed counter.
    pub fn draw<R: Ring>(&self, set: KeySet, tag: DomainTag, counter: u64) -> Result<R, TapeError> {
        Ok(R::from_u64(prf_u64(self.cipher(set)?, &tag, counter)))
    }
}

/// Combines the three shared values into a mask triple with `x1 = x2 - x3`.
pub fn triple_from_shared<R: Ring>(r124: R, r134: R, r234: R) -> (R, R, R) {
    (r124 - r134, r234 + r124, r134 + r234)
}

/// The components of a mask triple one party can derive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaskTriple<R> {
    pub x1: Option<R>,
    pub x2: Option<R>,
    pub x3: Option<R>,
}

/// Key sets `{r124, r134, r234}` under a role map.
pub fn triple_sets(map: &RoleMap) -> [KeySet; 3] {
    [
        KeySet::of_roles(map, &[Role::R1, Role::R2, Role::R4]),
        KeySet::of_roles(map, &[Role::R1, Role::R3, Role::R4]),
        KeySet::of_roles(map, &[Role::R2, Role::R3, Role::R4]),
    ]
}

/// Non-interactive mask triple. The party playing role `r` (and role 4) can
/// derive component `x_r`; asking for anything else is an error.
pub fn mask_component<R: Ring>(
    keys: &KeyStore,
    map: &RoleMap,
    tag: DomainTag,
    component: u8,
) -> Result<R, TapeError> {
    let [s124, s134, s234] = triple_sets(map);
    let draw = |s| keys.draw::<R>(s, tag, 0);
    let missing = |_| TapeError::MissingComponent { party: keys.owner(), component };
    match component {
        1 => Ok(draw(s124).map_err(missing)? - draw(s134).map_err(missing)?),
        2 => Ok(draw(s234).map_err(missing)? + draw(s124).map_err(missing)?),
        3 => Ok(draw(s134).map_err(missing)? + draw(s234).map_err(missing)?),
        _ => Err(TapeError::MissingComponent { party: keys.owner(), component }),
    }
}

/// Every component of the triple the caller's key sets allow.
pub fn gen_mask_triple<R: Ring>(keys: &KeyStore, map: &RoleMap, tag: DomainTag) -> MaskTriple<R> {
    MaskTriple {
        x1: mask_component(keys, map, tag, 1).ok(),
        x2: mask_component(keys, map, tag, 2).ok(),
        x3: mask_component(keys, map, tag, 3).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{Zk, Ring};
    use PartyId::*;

    type R64 = Zk<u64>;
    const SEED: [u8; 16] = *b"fixed-test-seed!";

    fn tag(purpose: Purpose, id: u32) -> DomainTag {
        DomainTag::new(DomainTag::PROTO4, purpose, 0, id)
    }

    #[test]
    fn members_draw_equal_sequences() {
        let set = KeySet::of(&[P1, P2]);
        let a = KeyStore::from_master(P1, &SEED);
        let b = KeyStore::from_master(P2, &SEED);
        let mut ta = a.tape(set, tag(Purpose::MulPad, 7)).unwrap();
        let mut tb = b.tape(set, tag(Purpose::MulPad, 7)).unwrap();
        for _ in 0..1000 {
            assert_eq!(ta.next_element::<R64>(), tb.next_element::<R64>());
        }
        assert_eq!(ta.counter(), 1000);
    }

    #[test]
    fn non_members_cannot_open_the_tape() {
        let set = KeySet::of(&[P1, P2]);
        let c = KeyStore::from_master(P3, &SEED);
        assert!(matches!(c.tape(set, tag(Purpose::MulPad, 0)), Err(TapeError::NotMember { .. })));
    }

    #[test]
    fn domain_tags_separate_sequences() {
        let set = KeySet::of(&[P1, P3]);
        let k = KeyStore::from_master(P1, &SEED);
        let mut t1 = k.tape(set, tag(Purpose::MulPad, 1)).unwrap();
        let mut t2 = k.tape(set, tag(Purpose::MulPad, 2)).unwrap();
        let mut t3 = k.tape(set, tag(Purpose::OutMaskZ2, 1)).unwrap();
        let mut equal = 0;
        for _ in 0..10_000 {
            let (a, b, c) = (t1.next_element::<R64>(), t2.next_element::<R64>(), t3.next_element::<R64>());
            equal += (a == b) as u32 + (a == c) as u32;
        }
        assert_eq!(equal, 0);
    }

    #[test]
    fn different_key_gives_different_sequence() {
        let set = KeySet::of(&[P1, P2]);
        let k = KeyStore::from_master(P1, &SEED);
        let other = KeyStore::from_master(P1, b"another seed 16b");
        let mut t1 = k.tape(set, tag(Purpose::Fresh, 0)).unwrap();
        let mut t2 = other.tape(set, tag(Purpose::Fresh, 0)).unwrap();
        let equal = (0..10_000).filter(|_| t1.next_element::<R64>() == t2.next_element::<R64>()).count();
        assert_eq!(equal, 0);
    }

    crate::small_ring!(Z8, 3);

    #[test]
    fn triple_worked_example() {
        let (x1, x2, x3) = triple_from_shared(Z8::from_u64(7), Z8::from_u64(1), Z8::from_u64(3));
        assert_eq!((x1.to_u64(), x2.to_u64(), x3.to_u64()), (6, 2, 4));
        assert_eq!(x2 - x3, x1);
        let zero = Z8::zero();
        assert_eq!(triple_from_shared(zero, zero, zero), (zero, zero, zero));
    }

    #[test]
    fn triple_relation_and_views() {
        let map = RoleMap::identity(4);
        let stores: Vec<KeyStore> =
            [P1, P2, P3, P4].iter().map(|&p| KeyStore::from_master(p, &SEED)).collect();
        for g in 0..10_000u32 {
            let t = tag(Purpose::Triple, g);
            let views: Vec<MaskTriple<R64>> = stores.iter().map(|k| gen_mask_triple(k, &map, t)).collect();
            let full = views[3];
            let (x1, x2, x3) = (full.x1.unwrap(), full.x2.unwrap(), full.x3.unwrap());
            assert_eq!(x1, x2 - x3);
            assert_eq!(views[0], MaskTriple { x1: Some(x1), x2: None, x3: None });
            assert_eq!(views[1], MaskTriple { x1: None, x2: Some(x2), x3: None });
            assert_eq!(views[2], MaskTriple { x1: None, x2: None, x3: Some(x3) });
        }
    }

    #[test]
    fn ineligible_component_is_usage_error() {
        let map = RoleMap::identity(4);
        let p1 = KeyStore::from_master(P1, &SEED);
        let err = mask_component::<R64>(&p1, &map, tag(Purpose::Triple, 0), 2).unwrap_err();
        assert_eq!(err, TapeError::MissingComponent { party: P1, component: 2 });
    }
}
