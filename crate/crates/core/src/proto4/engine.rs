//! One party of the four-party protocol.
//!
//! The circuit is walked twice. The offline walk computes only masks, which
//! are input independent, and produces every offline message in one batch per
//! channel. The online walk repeats the same steps with real values and
//! consumes the offline messages in the same order.
//!
//! A wire is a sum of terms, each shared under its own role assignment. With
//! fixed roles every wire has one term. Under per-gate rotation, linear gates
//! may combine terms of different assignments, and a multiplication first
//! converts its inputs to the roles it runs under.

use std::collections::{BTreeMap, HashMap, VecDeque};

use smallvec::{smallvec, SmallVec};

use super::algebra;
use super::transcript::Transcript;
use crate::circuit::{Circuit, GateId, GateKind, Recipients};
use crate::party::{PartyId, Role, RoleMap};
use crate::ring::{MulMeter, Phase, Ring};
use crate::scheduler::rotation_role;
use crate::session::{Check, ProtocolError, Session};
use crate::tape::{gen_mask_triple, mask_component, triple_from_shared, DomainTag, KeySet, Purpose};
use crate::transport::MsgKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Config4 {
    pub rotate: bool,
    /// Multiplication layers between checkpoints.
    pub checkpoint_interval: usize,
    pub fair: bool,
    /// Keep the shares of every passed checkpoint for a fallback.
    pub snapshots: bool,
}

impl Default for Config4 {
    fn default() -> Self {
        Config4 { rotate: false, checkpoint_interval: 10, fair: false, snapshots: false }
    }
}

#[derive(Debug, Clone)]
pub struct Instance4 {
    /// Base assignment; role 4 never changes.
    pub map: RoleMap,
    pub instance: u16,
    pub cfg: Config4,
}

/// Evaluator record `[x_r, masked, 0]` (masked is `a3` for roles 1 and 2,
/// `a2` for role 3) or role 4's `[x1, x2, x3]`, under `map`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term<R> {
    pub map: RoleMap,
    pub sh: [R; 3],
}

pub type Wire<R> = SmallVec<[Term<R>; 1]>;

/// Shares after a passed checkpoint, in the base assignment.
#[derive(Debug, Clone)]
pub struct Snapshot<R> {
    pub checkpoint: u32,
    /// Last layer included.
    pub layer: usize,
    pub shares: Vec<Option<[R; 3]>>,
}

pub struct Outcome4<R> {
    pub result: Result<BTreeMap<GateId, u64>, ProtocolError>,
    /// One per passed checkpoint, oldest first.
    pub snapshots: Vec<Snapshot<R>>,
}

pub(super) const VERDICT_PROCEED: u8 = 0;
pub(super) const VERDICT_ABORT: u8 = 1;

pub(super) fn verdict_payload(kind: u8, checkpoint: u32, r: Option<&[u8]>) -> Vec<u8> {
    let mut v = vec![kind];
    v.extend(checkpoint.to_le_bytes());
    if let Some(r) = r {
        v.extend(r);
    }
    v
}

/// Per-gate state between sending and receiving.
enum Prep<R> {
    R1 { x1: R, y1: R, a3: R, b3: R, z1: R, r124: R, o4: R },
    R2 { x2: R, y2: R, a3: R, b3: R, z2: R, r124: R, r234: R, m2: R },
    R3 { x3: R, y3: R, a2: R, b2: R, z3: R, o1: R, r234: R, m3: R },
    R4([R; 3]),
}

struct ConvJob<R> {
    wire: GateId,
    seq: u32,
    from: Term<R>,
    to: RoleMap,
}

pub(super) struct Engine<'a, R: Ring> {
    pub c: &'a Circuit,
    pub inst: &'a Instance4,
    pub me: PartyId,
    inputs: &'a BTreeMap<GateId, u64>,
    online: bool,
    pub wires: Vec<Wire<R>>,
    off_out: BTreeMap<(PartyId, MsgKind), Vec<R>>,
    off_expect: BTreeMap<(PartyId, MsgKind), usize>,
    off_in: HashMap<(PartyId, MsgKind), VecDeque<R>>,
    on_in: HashMap<(PartyId, MsgKind), VecDeque<R>>,
    m3p_out: BTreeMap<PartyId, Vec<R>>,
    pending: Vec<usize>,
    pub transcript: Transcript,
    conv_seq: u32,
    conv: HashMap<(GateId, RoleMap), Term<R>>,
    pub snapshots: Vec<Snapshot<R>>,
    scratch: MulMeter,
    pub checkpoint: u32,
}

fn evaluator(r: Role) -> bool {
    r != Role::R4
}

/// Index (0-based) of the mask hidden in role `r`'s masked value.
fn hidden(r: Role) -> usize {
    if r == Role::R3 {
        1
    } else {
        2
    }
}

impl<'a, R: Ring> Engine<'a, R> {
    pub fn new(c: &'a Circuit, inst: &'a Instance4, me: PartyId, inputs: &'a BTreeMap<GateId, u64>) -> Self {
        Engine {
            c,
            inst,
            me,
            inputs,
            online: false,
            wires: vec![Wire::new(); c.len()],
            off_out: BTreeMap::new(),
            off_expect: BTreeMap::new(),
            off_in: HashMap::new(),
            on_in: HashMap::new(),
            m3p_out: BTreeMap::new(),
            pending: Vec::new(),
            transcript: Transcript::new(),
            conv_seq: 0,
            conv: HashMap::new(),
            snapshots: Vec::new(),
            scratch: MulMeter::default(),
            checkpoint: 0,
        }
    }

    pub fn tag(&self, purpose: Purpose, id: u32) -> DomainTag {
        DomainTag::new(DomainTag::PROTO4, purpose, self.inst.instance, id)
    }

    pub fn role(&self, map: &RoleMap) -> Role {
        map.role_of(self.me).expect("compute party")
    }

    pub fn base(&self) -> RoleMap {
        self.inst.map
    }

    pub fn peers(&self) -> Vec<PartyId> {
        self.base().parties().iter().copied().filter(|p| *p != self.me).collect()
    }

    fn lazy(&self) -> bool {
        !self.inst.cfg.rotate && self.role(&self.base()) == Role::R1
    }

    fn gate_map(&self, g: GateId) -> RoleMap {
        if self.inst.cfg.rotate {
            rotation_role(self.c.mul_index(g).expect("mul gate"))
        } else {
            self.base()
        }
    }

    fn push_off(&mut self, to: PartyId, kind: MsgKind, v: R) {
        if self.online {
            return;
        }
        self.off_out.entry((to, kind)).or_default().push(v);
    }

    /// In the offline walk, counts a value to expect; online, takes it.
    fn take_off(&mut self, from: PartyId, kind: MsgKind) -> R {
        if !self.online {
            *self.off_expect.entry((from, kind)).or_default() += 1;
            return R::zero();
        }
        self.off_in.get_mut(&(from, kind)).and_then(|q| q.pop_front()).expect("offline value")
    }

    fn take_on(&mut self, from: PartyId, kind: MsgKind) -> R {
        if !self.online {
            return R::zero();
        }
        self.on_in.get_mut(&(from, kind)).and_then(|q| q.pop_front()).expect("online value")
    }

    fn log(&mut self, peer: PartyId, check: Check, id: u32, v: R) {
        if self.online {
            self.transcript.log(peer, check, id, v);
        }
    }

    /// Sends the batches and fills the online queues from `expect`.
    fn exchange(
        &mut self,
        s: &mut Session,
        id: u32,
        out: BTreeMap<(PartyId, MsgKind), Vec<R>>,
        expect: BTreeMap<(PartyId, MsgKind), usize>,
    ) -> Result<(), ProtocolError> {
        for ((to, kind), xs) in &out {
            s.send(*to, Phase::Online, *kind, id, xs)?;
        }
        for ((from, kind), n) in expect {
            let xs: Vec<R> = s.recv(from, kind, n)?;
            self.on_in.entry((from, kind)).or_default().extend(xs);
        }
        Ok(())
    }

    // ---- inputs ----

    /// Masks `(x1, x2, x3)` of an input dealt by `dealer`, as far as this
    /// party can derive them.
    fn input_masks(&self, s: &Session, g: GateId, dealer: Role) -> Result<[Option<R>; 3], ProtocolError> {
        let map = self.base();
        let tag = self.tag(Purpose::InputMask, g);
        let set = |roles: &[Role]| KeySet::of_roles(&map, roles);
        let (s124, s134, s234) =
            (set(&[Role::R1, Role::R2, Role::R4]), set(&[Role::R1, Role::R3, Role::R4]), set(&[Role::R2, Role::R3, Role::R4]));
        let draw = |k: KeySet| -> Result<Option<R>, ProtocolError> {
            if s.keys.holds(k) {
                Ok(Some(s.draw(k, tag)?))
            } else {
                Ok(None)
            }
        };
        let both = |a: Option<R>, b: Option<R>, f: fn(R, R) -> R| a.zip(b).map(|(a, b)| f(a, b));
        Ok(match dealer {
            Role::R1 => {
                let (a, b) = (draw(s124)?, draw(s134)?);
                [both(a, b, |a, b| a - b), a, b]
            }
            Role::R2 => {
                let (a, b) = (draw(s124)?, draw(s234)?);
                [a, both(a, b, |a, b| a + b), b]
            }
            Role::R3 => {
                let (a, b) = (draw(s134)?, draw(s234)?);
                [a, b, both(a, b, |a, b| b - a)]
            }
            _ => {
                let (r124, r134, r234) = (draw(s124)?, draw(s134)?, draw(s234)?);
                match (r124, r134, r234) {
                    (Some(p), Some(q), Some(r)) => {
                        let (x1, x2, x3) = triple_from_shared(p, q, r);
                        [Some(x1), Some(x2), Some(x3)]
                    }
                    _ => [
                        both(r124, r134, |p, q| p - q),
                        both(r234, r124, |r, p| r + p),
                        both(r134, r234, |q, r| q + r),
                    ],
                }
            }
        })
    }

    fn share_inputs(&mut self, s: &mut Session) -> Result<(), ProtocolError> {
        let map = self.base();
        let me_role = self.role(&map);
        let gates: Vec<(GateId, PartyId)> = self
            .c
            .inputs()
            .map(|g| match g.kind {
                GateKind::Input { owner } => (g.id, owner),
                _ => unreachable!(),
            })
            .collect();
        let mut out: BTreeMap<(PartyId, MsgKind), Vec<R>> = BTreeMap::new();
        let mut expect: BTreeMap<(PartyId, MsgKind), usize> = BTreeMap::new();
        for &(g, owner) in &gates {
            let dealer = map
                .role_of(owner)
                .ok_or_else(|| ProtocolError::Unsupported(format!("input dealt by {owner}")))?;
            let x = self.input_masks(s, g, dealer)?;
            let mut sh = [R::zero(); 3];
            if me_role == Role::R4 {
                sh = x.map(|v| v.expect("role 4 derives every input mask"));
            } else {
                sh[0] = x[me_role.0 as usize].expect("own input mask");
            }
            if owner == self.me && self.online {
                let v = R::from_u64(self.inputs[&g]);
                let (a3, a2) = (v + x[2].expect("dealer mask"), v + x[1].expect("dealer mask"));
                let to = |r| map.party(r);
                let sends: &[(Role, R)] = match dealer {
                    Role::R1 => &[(Role::R2, a3), (Role::R3, a2)],
                    Role::R2 => &[(Role::R1, a3), (Role::R3, a2)],
                    Role::R3 => &[(Role::R1, a3), (Role::R2, a3)],
                    _ => &[(Role::R1, a3), (Role::R2, a3), (Role::R3, a2)],
                };
                for &(r, v) in sends {
                    out.entry((to(r), MsgKind::Share)).or_default().push(v);
                }
                if evaluator(me_role) {
                    sh[1] = if me_role == Role::R3 { a2 } else { a3 };
                }
            } else if evaluator(me_role) && owner != self.me {
                *expect.entry((owner, MsgKind::Share)).or_default() += 1;
            }
            self.wires[g as usize] = smallvec![Term { map, sh }];
        }
        if !self.online {
            return Ok(());
        }
        s.round();
        self.exchange(s, 0, out, expect)?;
        for &(g, owner) in &gates {
            let w = &mut self.wires[g as usize][0];
            if evaluator(me_role) && owner != self.me {
                w.sh[1] = self.on_in.get_mut(&(owner, MsgKind::Share)).and_then(|q| q.pop_front()).expect("share");
            }
            let t = self.wires[g as usize][0];
            match me_role {
                Role::R1 => {
                    self.log(map.party(Role::R2), Check::Input, g, t.sh[1]);
                    self.log(map.party(Role::R3), Check::Input, g, t.sh[1] + t.sh[0]);
                }
                Role::R2 => self.log(map.party(Role::R1), Check::Input, g, t.sh[1]),
                Role::R3 => self.log(map.party(Role::R1), Check::Input, g, t.sh[1]),
                _ => {}
            }
        }
        Ok(())
    }

    // ---- linear gates ----

    fn linear(&mut self, g: GateId) {
        let me = self.me;
        let kind = self.c.gate(g).kind.clone();
        let w: Wire<R> = match kind {
            GateKind::Add(a, b) => {
                let mut w = self.wires[a as usize].clone();
                for t in self.wires[b as usize].clone() {
                    match w.iter_mut().find(|u| u.map == t.map) {
                        Some(u) => {
                            for i in 0..3 {
                                u.sh[i] += t.sh[i];
                            }
                        }
                        None => w.push(t),
                    }
                }
                w
            }
            GateKind::ConstAdd(a, k) => {
                let mut w = self.wires[a as usize].clone();
                let t = &mut w[0];
                if t.map.role_of(me) != Some(Role::R4) {
                    t.sh[1] += R::from_u64(k);
                }
                w
            }
            GateKind::ConstMul(a, k) => {
                let k = R::from_u64(k);
                let mut w = self.wires[a as usize].clone();
                for t in w.iter_mut() {
                    t.sh = t.sh.map(|v| v * k);
                }
                w
            }
            _ => return,
        };
        self.wires[g as usize] = w;
    }

    // ---- multiplication ----

    fn input_term(&self, w: GateId, map: RoleMap) -> Term<R> {
        let wire = &self.wires[w as usize];
        if wire.len() == 1 && wire[0].map == map {
            return wire[0];
        }
        self.conv[&(w, map)]
    }

    fn prepare_mul(
        &mut self,
        s: &mut Session,
        g: GateId,
        out: &mut BTreeMap<(PartyId, MsgKind), Vec<R>>,
        expect: &mut BTreeMap<(PartyId, MsgKind), usize>,
    ) -> Result<Prep<R>, ProtocolError> {
        let GateKind::Mul(a, b) = self.c.gate(g).kind else { unreachable!() };
        let map = self.gate_map(g);
        let (ta, tb) = (self.input_term(a, map), self.input_term(b, map));
        let role = self.role(&map);
        let p = |r| map.party(r);
        let set = |roles: &[Role]| KeySet::of_roles(&map, roles);
        let pad = self.tag(Purpose::MulPad, g);
        let tri = self.tag(Purpose::Triple, g);
        Ok(match role {
            Role::R1 => {
                let (x1, a3, y1, b3) = (ta.sh[0], ta.sh[1], tb.sh[0], tb.sh[1]);
                let r124: R = s.draw(set(&[Role::R1, Role::R2, Role::R4]), pad)?;
                if !self.online {
                    let o1 = algebra::o1(&mut s.meter, x1, y1, r124);
                    self.push_off(p(Role::R3), MsgKind::O1, o1);
                }
                let o4 = self.take_off(p(Role::R4), MsgKind::O4);
                let z1 = mask_component(s.keys, &map, tri, 1)?;
                if self.online && self.inst.cfg.rotate {
                    *expect.entry((p(Role::R3), MsgKind::M3Prime)).or_default() += 1;
                }
                Prep::R1 { x1, y1, a3, b3, z1, r124, o4 }
            }
            Role::R2 => {
                let (x2, a3, y2, b3) = (ta.sh[0], ta.sh[1], tb.sh[0], tb.sh[1]);
                let r124: R = s.draw(set(&[Role::R1, Role::R2, Role::R4]), pad)?;
                let r234: R = s.draw(set(&[Role::R2, Role::R3, Role::R4]), pad)?;
                let z2 = mask_component(s.keys, &map, tri, 2)?;
                let mut m2 = R::zero();
                if self.online {
                    m2 = algebra::m2(&mut s.meter, a3, b3, x2, y2, r124, z2);
                    out.entry((p(Role::R3), MsgKind::M2)).or_default().push(m2);
                    *expect.entry((p(Role::R3), MsgKind::M3)).or_default() += 1;
                }
                Prep::R2 { x2, y2, a3, b3, z2, r124, r234, m2 }
            }
            Role::R3 => {
                let (x3, a2, y3, b2) = (ta.sh[0], ta.sh[1], tb.sh[0], tb.sh[1]);
                let o1 = self.take_off(p(Role::R1), MsgKind::O1);
                let r234: R = s.draw(set(&[Role::R2, Role::R3, Role::R4]), pad)?;
                let z3 = mask_component(s.keys, &map, tri, 3)?;
                let mut m3 = R::zero();
                if self.online {
                    m3 = algebra::m3(&mut s.meter, a2, b2, o1, x3, y3, z3);
                    let m3p = algebra::m3p(&mut s.meter, a2, b2, x3, y3, r234, z3);
                    out.entry((p(Role::R2), MsgKind::M3)).or_default().push(m3);
                    if self.inst.cfg.rotate {
                        out.entry((p(Role::R1), MsgKind::M3Prime)).or_default().push(m3p);
                    } else {
                        self.m3p_out.entry(p(Role::R1)).or_default().push(m3p);
                    }
                    *expect.entry((p(Role::R2), MsgKind::M2)).or_default() += 1;
                }
                Prep::R3 { x3, y3, a2, b2, z3, o1, r234, m3 }
            }
            _ => {
                let [x1, x2, x3] = ta.sh;
                let [y1, y2, y3] = tb.sh;
                let r124: R = s.draw(set(&[Role::R1, Role::R2, Role::R4]), pad)?;
                if self.online {
                    let o1 = algebra::o1(&mut self.scratch, x1, y1, r124);
                    self.log(p(Role::R3), Check::O1, g, o1);
                } else {
                    let r234: R = s.draw(set(&[Role::R2, Role::R3, Role::R4]), pad)?;
                    let o4 = algebra::o4(&mut s.meter, x2, y2, x3, y3, r234);
                    self.push_off(p(Role::R1), MsgKind::O4, o4);
                }
                let z = gen_mask_triple::<R>(s.keys, &map, tri);
                Prep::R4([z.x1, z.x2, z.x3].map(|v| v.expect("role 4 derives the triple")))
            }
        })
    }

    fn finish_mul(&mut self, s: &mut Session, g: GateId, prep: Prep<R>) {
        let map = self.gate_map(g);
        let p = |r| map.party(r);
        let sh = match prep {
            Prep::R1 { x1, y1, a3, b3, z1, r124, o4 } => {
                let mut c3 = R::zero();
                if self.online {
                    let m3p = self.take_on(p(Role::R3), MsgKind::M3Prime);
                    c3 = algebra::c3_role1(&mut s.meter, m3p, a3, b3, x1, y1, o4);
                    let v1 = algebra::v1(&mut self.scratch, a3, b3, x1, y1, o4, z1, r124);
                    self.log(p(Role::R2), Check::V1, g, v1);
                    self.log(p(Role::R3), Check::V1, g, v1);
                    self.log(p(Role::R2), Check::C3, g, c3);
                }
                [z1, c3, R::zero()]
            }
            Prep::R2 { x2, y2, a3, b3, z2, r124, r234, m2 } => {
                let mut c3 = R::zero();
                if self.online {
                    let m3 = self.take_on(p(Role::R3), MsgKind::M3);
                    c3 = algebra::c3_role2(&mut s.meter, m3, a3, b3, x2, y2, r124);
                    let v = algebra::v23(m2, m3, r234);
                    self.log(p(Role::R3), Check::V23, g, v);
                    self.log(p(Role::R1), Check::V1, g, v);
                    self.log(p(Role::R1), Check::C3, g, c3);
                }
                [z2, c3, R::zero()]
            }
            Prep::R3 { x3, y3, a2, b2, z3, o1, r234, m3 } => {
                let mut c2 = R::zero();
                if self.online {
                    let m2 = self.take_on(p(Role::R2), MsgKind::M2);
                    c2 = algebra::c2_role3(&mut s.meter, m2, a2, b2, x3, y3, o1);
                    let v = algebra::v23(m2, m3, r234);
                    self.log(p(Role::R2), Check::V23, g, v);
                    self.log(p(Role::R1), Check::V1, g, v);
                    self.log(p(Role::R4), Check::O1, g, o1);
                }
                [z3, c2, R::zero()]
            }
            Prep::R4(z) => z,
        };
        self.wires[g as usize] = smallvec![Term { map, sh }];
    }

    /// Multiplications and linear gates of one layer. `exchange` is false
    /// when replaying deferred layers, whose messages are already queued.
    fn layer(&mut self, s: &mut Session, li: usize, exchange: bool) -> Result<(), ProtocolError> {
        let layer = &self.c.layers()[li];
        let (muls, linear) = (layer.muls.clone(), layer.linear.clone());
        if !muls.is_empty() {
            if self.inst.cfg.rotate {
                let jobs = self.mul_conversions(&muls);
                self.convert(s, li as u32, jobs)?;
            }
            let mut out = BTreeMap::new();
            let mut expect = BTreeMap::new();
            let mut preps = Vec::with_capacity(muls.len());
            for &g in &muls {
                preps.push(self.prepare_mul(s, g, &mut out, &mut expect)?);
            }
            if self.online && exchange {
                s.round();
                self.exchange(s, li as u32, out, expect)?;
            }
            for (&g, prep) in muls.iter().zip(preps) {
                self.finish_mul(s, g, prep);
            }
            self.conv.clear();
        }
        for g in linear {
            self.linear(g);
        }
        Ok(())
    }

    // ---- role conversion (rotation only) ----

    fn mul_conversions(&self, muls: &[GateId]) -> Vec<(GateId, RoleMap)> {
        let mut jobs = Vec::new();
        for &g in muls {
            let GateKind::Mul(a, b) = self.c.gate(g).kind else { unreachable!() };
            let map = self.gate_map(g);
            for w in [a, b] {
                let wire = &self.wires[w as usize];
                let ready = wire.len() == 1 && wire[0].map == map;
                if !ready && !jobs.contains(&(w, map)) {
                    jobs.push((w, map));
                }
            }
        }
        jobs
    }

    /// Converts each `(wire, assignment)` into a single term, stored in the
    /// conversion cache.
    fn convert(&mut self, s: &mut Session, id: u32, jobs: Vec<(GateId, RoleMap)>) -> Result<(), ProtocolError> {
        let mut pending: Vec<ConvJob<R>> = Vec::new();
        let mut ready: Vec<(GateId, RoleMap, Vec<Term<R>>)> = Vec::new();
        for (w, to) in jobs {
            let mut done = Vec::new();
            for t in self.wires[w as usize].clone() {
                if t.map == to {
                    done.push(t);
                } else if R::BITS == 1 {
                    done.push(self.relabel_local(t, to));
                } else {
                    pending.push(ConvJob { wire: w, seq: self.conv_seq, from: t, to });
                    self.conv_seq += 1;
                }
            }
            ready.push((w, to, done));
        }
        let mut out = BTreeMap::new();
        let mut expect = BTreeMap::new();
        let mut starts = Vec::with_capacity(pending.len());
        for job in &pending {
            starts.push(self.conv_start(s, job, &mut out, &mut expect)?);
        }
        if self.online && !pending.is_empty() {
            s.round();
            self.exchange(s, id, out, expect)?;
        }
        let mut finished: Vec<(GateId, RoleMap, Term<R>)> = Vec::new();
        for (job, start) in pending.iter().zip(starts) {
            finished.push((job.wire, job.to, self.conv_finish(s, job, start)));
        }
        for (w, to, mut terms) in ready {
            terms.extend(finished.iter().filter(|f| f.0 == w && f.1 == to).map(|f| f.2));
            let mut sum = terms[0];
            for t in &terms[1..] {
                for i in 0..3 {
                    sum.sh[i] += t.sh[i];
                }
            }
            self.conv.insert((w, to), sum);
        }
        Ok(())
    }

    /// Binary ring: masks follow the parties and each party already holds
    /// the masked values under the other two masks.
    fn relabel_local(&self, t: Term<R>, to: RoleMap) -> Term<R> {
        let from_role = self.role(&t.map);
        let new_role = self.role(&to);
        if from_role == Role::R4 {
            let mut sh = [R::zero(); 3];
            for (j, v) in sh.iter_mut().enumerate() {
                let holder = to.party(Role(j as u8));
                *v = t.sh[t.map.role_of(holder).expect("member").0 as usize];
            }
            return Term { map: to, sh };
        }
        let (x, m) = (t.sh[0], t.sh[1]);
        let want = to.party(Role(hidden(new_role) as u8));
        let s = t.map.role_of(want).expect("member").0 as usize;
        let masked = if s == hidden(from_role) { m } else { m + x };
        Term { map: to, sh: [x, masked, R::zero()] }
    }

    /// Target's hidden-mask index and its pad tape for a conversion.
    fn conv_targets(to: &RoleMap) -> [(PartyId, usize); 3] {
        [Role::R1, Role::R2, Role::R3].map(|r| (to.party(r), hidden(r)))
    }

    fn conv_start(
        &mut self,
        s: &mut Session,
        job: &ConvJob<R>,
        out: &mut BTreeMap<(PartyId, MsgKind), Vec<R>>,
        expect: &mut BTreeMap<(PartyId, MsgKind), usize>,
    ) -> Result<R, ProtocolError> {
        let holder = job.from.map.party(Role::R2);
        let p4 = job.to.party(Role::R4);
        let pads = KeySet::of(&[holder, p4]);
        let padtag = self.tag(Purpose::ConvertPad, job.seq);
        let fresh = self.tag(Purpose::Fresh, job.seq);
        let me_role = self.role(&job.to);
        if me_role == Role::R4 {
            if !self.online {
                let z = gen_mask_triple::<R>(s.keys, &job.to, fresh);
                let x = [z.x1, z.x2, z.x3].map(|v| v.expect("role 4 derives the triple"));
                let x3 = job.from.sh[2];
                for (i, (t, q)) in Self::conv_targets(&job.to).into_iter().enumerate() {
                    let mut d = x[q] - x3;
                    if t != holder {
                        d -= s.keys.draw::<R>(pads, padtag, i as u64)?;
                    }
                    self.push_off(t, MsgKind::Convert, d);
                }
            }
            return Ok(R::zero());
        }
        if self.me == holder && self.online {
            let u = job.from.sh[1];
            for (i, (t, _)) in Self::conv_targets(&job.to).into_iter().enumerate() {
                if t != holder {
                    let rho: R = s.keys.draw(pads, padtag, i as u64)?;
                    out.entry((t, MsgKind::Convert)).or_default().push(u + rho);
                }
            }
        }
        if self.me != holder && self.online {
            *expect.entry((holder, MsgKind::Convert)).or_default() += 1;
        }
        Ok(self.take_off(p4, MsgKind::Convert))
    }

    fn conv_finish(&mut self, s: &Session, job: &ConvJob<R>, pad: R) -> Term<R> {
        let me_role = self.role(&job.to);
        let fresh = self.tag(Purpose::Fresh, job.seq);
        let holder = job.from.map.party(Role::R2);
        let keys = s.keys;
        if me_role == Role::R4 {
            let z = gen_mask_triple::<R>(keys, &job.to, fresh);
            return Term { map: job.to, sh: [z.x1, z.x2, z.x3].map(|v| v.expect("role 4 derives the triple")) };
        }
        let x = mask_component::<R>(keys, &job.to, fresh, me_role.0 + 1).expect("own component");
        let masked = if !self.online {
            R::zero()
        } else if self.me == holder {
            job.from.sh[1] + pad
        } else {
            self.take_on(holder, MsgKind::Convert) + pad
        };
        let (p1, p2, p3) = (job.to.party(Role::R1), job.to.party(Role::R2), job.to.party(Role::R3));
        match me_role {
            Role::R1 => {
                self.log(p2, Check::Convert, job.seq, masked);
                self.log(p3, Check::Convert, job.seq, masked + x);
            }
            Role::R2 => self.log(p1, Check::Convert, job.seq, masked),
            _ => self.log(p1, Check::Convert, job.seq, masked),
        }
        Term { map: job.to, sh: [x, masked, R::zero()] }
    }
}

impl<'a, R: Ring> Engine<'a, R> {
    fn walk_offline(&mut self, s: &mut Session) -> Result<(), ProtocolError> {
        self.online = false;
        self.share_inputs(s)?;
        for li in 0..self.c.layers().len() {
            self.layer(s, li, false)?;
        }
        self.output_conversions(s)?;
        s.round();
        for ((to, kind), xs) in std::mem::take(&mut self.off_out) {
            s.send(to, Phase::Offline, kind, 0, &xs)?;
        }
        for ((from, kind), n) in std::mem::take(&mut self.off_expect) {
            let xs: Vec<R> = s.recv(from, kind, n)?;
            self.off_in.insert((from, kind), xs.into());
        }
        self.wires = vec![Wire::new(); self.c.len()];
        self.conv_seq = 0;
        Ok(())
    }

    fn output_conversions(&mut self, s: &mut Session) -> Result<(), ProtocolError> {
        if !self.inst.cfg.rotate {
            return Ok(());
        }
        let base = self.base();
        let mut jobs = Vec::new();
        for g in self.c.outputs() {
            let GateKind::Output { src, .. } = g.kind.clone() else { unreachable!() };
            let wire = &self.wires[src as usize];
            if !(wire.len() == 1 && wire[0].map == base) && !jobs.contains(&(src, base)) {
                jobs.push((src, base));
            }
        }
        let id = self.c.layers().len() as u32;
        self.convert(s, id, jobs)?;
        for ((w, _), t) in std::mem::take(&mut self.conv) {
            self.wires[w as usize] = smallvec![t];
        }
        Ok(())
    }

    fn is_checkpoint(&self, li: usize) -> bool {
        let last = self.c.layers().len().saturating_sub(1);
        li == 0 || li.is_multiple_of(self.inst.cfg.checkpoint_interval.max(1)) || li == last
    }

    /// Deferred m3' delivery, digest comparison and a verdict round.
    fn checkpoint(&mut self, s: &mut Session, layer: usize) -> Result<(), ProtocolError> {
        let cp = self.checkpoint;
        let base = self.base();
        if !self.inst.cfg.rotate {
            s.round();
            for (to, xs) in std::mem::take(&mut self.m3p_out) {
                s.send(to, Phase::Online, MsgKind::M3Prime, cp, &xs)?;
            }
            if self.lazy() && !self.pending.is_empty() {
                let n: usize = self.pending.iter().map(|&l| self.c.layers()[l].muls.len()).sum();
                let from = base.party(Role::R3);
                let xs: Vec<R> = s.recv(from, MsgKind::M3Prime, n)?;
                self.on_in.entry((from, MsgKind::M3Prime)).or_default().extend(xs);
                for l in std::mem::take(&mut self.pending) {
                    self.layer(s, l, false)?;
                }
            }
        }
        self.compare_digests(s, cp, vec![], vec![])?;
        if self.inst.cfg.snapshots {
            self.snapshots.push(Snapshot {
                checkpoint: cp,
                layer,
                shares: self.wires.iter().map(|w| w.first().map(|t| t.sh)).collect(),
            });
        }
        self.checkpoint += 1;
        Ok(())
    }

    /// Exchanges transcript digests; `pairs` and `checks` carry failures
    /// found outside the transcript.
    pub fn compare_digests(
        &mut self,
        s: &mut Session,
        cp: u32,
        mut pairs: Vec<(PartyId, PartyId)>,
        mut checks: Vec<Check>,
    ) -> Result<(), ProtocolError> {
        s.round();
        let mine = self.transcript.flush();
        for (peer, (d, _)) in &mine {
            s.send_raw(*peer, Phase::Online, MsgKind::Digest, cp, d.to_vec())?;
        }
        for (peer, (d, c)) in &mine {
            let f = s.recv_raw(*peer, MsgKind::Digest)?;
            if f.payload != d.as_slice() {
                pairs.push((self.me, *peer));
                for &k in c {
                    if !checks.contains(&k) {
                        checks.push(k);
                    }
                }
            }
        }
        self.verdict(s, cp, pairs, checks)
    }

    /// Everyone tells everyone whether it saw a mismatch.
    pub fn verdict(
        &mut self,
        s: &mut Session,
        cp: u32,
        pairs: Vec<(PartyId, PartyId)>,
        checks: Vec<Check>,
    ) -> Result<(), ProtocolError> {
        s.round();
        let kind = if pairs.is_empty() { VERDICT_PROCEED } else { VERDICT_ABORT };
        for p in self.peers() {
            s.send_raw(p, Phase::Online, MsgKind::Verdict, cp, verdict_payload(kind, cp, None))?;
        }
        if !pairs.is_empty() {
            return Err(ProtocolError::CheckFailed { checkpoint: cp, pairs, checks });
        }
        let mut blame = None;
        for p in self.peers() {
            let f = s.recv_raw(p, MsgKind::Verdict)?;
            if f.payload.first() != Some(&VERDICT_PROCEED) && blame.is_none() {
                blame = Some(p);
            }
        }
        match blame {
            Some(from) => Err(ProtocolError::Verdict { checkpoint: cp, from }),
            None => Ok(()),
        }
    }

    pub(super) fn output_gates(&self) -> Vec<(GateId, GateId, Recipients)> {
        self.c
            .outputs()
            .map(|g| match g.kind.clone() {
                GateKind::Output { src, recipients } => (g.id, src, recipients),
                _ => unreachable!(),
            })
            .collect()
    }

    /// Mask revealed to an evaluator recipient and who holds it.
    pub(super) fn reveal_source(&self, recipient: Role) -> (Role, usize) {
        match recipient {
            Role::R3 => (Role::R2, 1),
            _ => (Role::R3, 2),
        }
    }

    /// Masks go to evaluator recipients, `a3` from roles 1 and 2 to role 4;
    /// revealed masks are cross-checked with role 4 before release.
    fn open_secure(&mut self, s: &mut Session) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
        let base = self.base();
        let me_role = self.role(&base);
        let outs = self.output_gates();
        let sh = |w: GateId| self.wires[w as usize][0].sh;
        s.round();
        let mut out: BTreeMap<PartyId, Vec<R>> = BTreeMap::new();
        for &(_, src, rec) in &outs {
            for r in [Role::R1, Role::R2, Role::R3, Role::R4] {
                let to = base.party(r);
                if !rec.contains(to) || to == self.me {
                    continue;
                }
                let send = if r == Role::R4 {
                    matches!(me_role, Role::R1 | Role::R2)
                } else {
                    self.reveal_source(r).0 == me_role
                };
                if send {
                    out.entry(to).or_default().push(sh(src)[if r == Role::R4 { 1 } else { 0 }]);
                }
            }
        }
        for (to, xs) in &out {
            s.send(*to, Phase::Online, MsgKind::Reveal, self.checkpoint, xs)?;
        }
        let mine: Vec<(GateId, GateId)> =
            outs.iter().filter(|o| o.2.contains(self.me)).map(|o| (o.0, o.1)).collect();
        let mut result = BTreeMap::new();
        let p4 = base.party(Role::R4);
        if me_role == Role::R4 {
            let (p1, p2) = (base.party(Role::R1), base.party(Role::R2));
            let from1: Vec<R> = s.recv(p1, MsgKind::Reveal, mine.len())?;
            let from2: Vec<R> = s.recv(p2, MsgKind::Reveal, mine.len())?;
            let mut bad = Vec::new();
            for (i, &(o, src)) in mine.iter().enumerate() {
                if from1[i] != from2[i] && bad.is_empty() {
                    bad.push((p1, p2));
                }
                result.insert(o, (from1[i] - sh(src)[2]).to_u64());
            }
            // Log the masks each evaluator recipient received.
            for &(o, src, rec) in &outs {
                for r in [Role::R1, Role::R2, Role::R3] {
                    if rec.contains(base.party(r)) {
                        let (_, idx) = self.reveal_source(r);
                        self.transcript.log(base.party(r), Check::Reveal, o, sh(src)[idx]);
                    }
                }
            }
            let cp = self.checkpoint;
            let checks = if bad.is_empty() { vec![] } else { vec![Check::Reveal] };
            self.compare_digests(s, cp, bad, checks)?;
            return Ok(result);
        } else {
            let (src_role, _) = self.reveal_source(me_role);
            let from = base.party(src_role);
            let xs: Vec<R> = s.recv(from, MsgKind::Reveal, mine.len())?;
            for (&(o, src), x) in mine.iter().zip(xs) {
                self.transcript.log(p4, Check::Reveal, o, x);
                result.insert(o, (sh(src)[1] - x).to_u64());
            }
        }
        let cp = self.checkpoint;
        self.compare_digests(s, cp, vec![], vec![])?;
        Ok(result)
    }

    pub fn run(&mut self, s: &mut Session) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
        s.round();
        self.walk_offline(s)?;
        self.online = true;
        self.share_inputs(s)?;
        let depth = self.c.layers().len();
        for li in 0..depth {
            if li > 0 && self.lazy() {
                self.pending.push(li);
            } else {
                self.layer(s, li, true)?;
            }
            if self.is_checkpoint(li) && !(self.inst.cfg.rotate && li + 1 == depth) {
                self.checkpoint(s, li)?;
            }
        }
        if self.inst.cfg.rotate || depth == 0 {
            self.output_conversions(s)?;
            self.checkpoint(s, depth.saturating_sub(1))?;
        }
        if self.inst.cfg.fair {
            self.fair_open(s)
        } else {
            self.open_secure(s)
        }
    }
}

/// Runs one party of the four-party protocol.
pub fn run_party<R: Ring>(
    s: &mut Session,
    c: &Circuit,
    inst: &Instance4,
    inputs: &BTreeMap<GateId, u64>,
) -> Outcome4<R> {
    let mut e = Engine::<R>::new(c, inst, s.me, inputs);
    let result = e.run(s);
    Outcome4 { result, snapshots: std::mem::take(&mut e.snapshots) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::random::{random_circuit, random_inputs, RandomSpec};
    use crate::party::COMPUTE_PARTIES;
    use crate::ring::{Width, Zk};
    use crate::runner::{own_inputs, spawn_parties, RunOptions};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use PartyId::*;

    type R = Zk<u16>;

    fn clear_wires(c: &Circuit, given: &BTreeMap<GateId, u64>) -> Vec<R> {
        let mut v = vec![R::zero(); c.len()];
        for layer in c.layers() {
            for &g in layer.muls.iter().chain(&layer.linear) {
                v[g as usize] = match c.gate(g).kind {
                    GateKind::Input { .. } => R::from_u64(given[&g]),
                    GateKind::Add(a, b) => v[a as usize] + v[b as usize],
                    GateKind::Mul(a, b) => v[a as usize] * v[b as usize],
                    GateKind::ConstAdd(a, k) => v[a as usize] + R::from_u64(k),
                    GateKind::ConstMul(a, k) => v[a as usize] * R::from_u64(k),
                    GateKind::Output { .. } => R::zero(),
                };
            }
        }
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// At every checkpoint each wire satisfies the share layout:
        /// x1 = x2 - x3, a3 = v + x3, a2 = v + x2, and the parties agree on
        /// every value two of them hold.
        #[test]
        fn shares_keep_their_layout(seed in any::<u64>()) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let c = random_circuit(&mut rng, &RandomSpec::new(Width::W16, 80, 6, &COMPUTE_PARTIES));
            let x = random_inputs(&mut rng, &c);
            let given = crate::circuit::input_values(&c, &x).unwrap();
            let clear = clear_wires(&c, &given);
            let inst = Instance4 {
                map: RoleMap::identity(4),
                instance: 0,
                cfg: Config4 { checkpoint_interval: 1, snapshots: true, ..Config4::default() },
            };
            let runs = spawn_parties(&COMPUTE_PARTIES, &RunOptions::default(), c.width(), None, |s| {
                let mine = own_inputs(&c, &given, s.me);
                run_party::<R>(s, &c, &inst, &mine)
            }).unwrap();
            let by: BTreeMap<PartyId, Outcome4<R>> = runs.into_iter().map(|r| (r.party, r.value)).collect();
            let n = by[&P4].snapshots.len();
            prop_assert!(n >= 2);
            for k in 0..n {
                let snap = |p: PartyId| &by[&p].snapshots[k].shares;
                for w in 0..c.len() {
                    let Some([x1, x2, x3]) = snap(P4)[w] else { continue };
                    let (s1, s2, s3) = (snap(P1)[w].unwrap(), snap(P2)[w].unwrap(), snap(P3)[w].unwrap());
                    prop_assert_eq!(x1, x2 - x3);
                    prop_assert_eq!((s1[0], s2[0], s3[0]), (x1, x2, x3));
                    prop_assert_eq!(s1[1], s2[1]);
                    prop_assert_eq!(s2[1], clear[w] + x3);
                    prop_assert_eq!(s3[1], clear[w] + x2);
                }
            }
        }
    }
}
