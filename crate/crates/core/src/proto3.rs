//! Semi-honest three-party computation.
//!
//! Share layout for a wire with value `a` and masks `x1 = x2 - x3`:
//!
//! | role | record        |
//! |------|---------------|
//! | 1    | `(x2, x3)`    |
//! | 2    | `(x2, a3)`    |
//! | 3    | `a2`          |
//!
//! with `a3 = a + x3` and `a2 = a + x2`. Role 1 never touches inputs after
//! dealing, so it evaluates the whole circuit on masks in the offline phase and
//! sends one correction `m1` per multiplication to role 3. Roles 2 and 3 then
//! exchange one element each per multiplication online.

use std::collections::BTreeMap;

use crate::circuit::{Circuit, GateId, GateKind};
use crate::party::{PartyId, Role, RoleMap};
use crate::ring::{MulMeter, Phase, Ring};
use crate::session::{ProtocolError, Session};
use crate::tape::{DomainTag, KeySet, Purpose};
use crate::transport::MsgKind;

/// One party's record for one wire, interpreted by role (see module docs).
/// Role 3 only uses the first slot.
pub type Share3<R> = [R; 2];

/// Per-role formulas of the multiplication, shared by the engine and tests.
pub mod algebra {
    use super::*;

    /// Role 1, offline: `m1 = x3*y3 - x1*y1 + r12`.
    pub fn m1<R: Ring>(meter: &mut MulMeter, x2: R, x3: R, y2: R, y3: R, r12: R) -> R {
        let (x1, y1) = (x2 - x3, y2 - y3);
        meter.mul(Phase::Offline, x3, y3) - meter.mul(Phase::Offline, x1, y1) + r12
    }

    /// Role 2, online: `t2 = a3*y2 + b3*x2 + r12`.
    pub fn t2<R: Ring>(meter: &mut MulMeter, a3: R, b3: R, x2: R, y2: R, r12: R) -> R {
        meter.mul(Phase::Online, a3, y2) + meter.mul(Phase::Online, b3, x2) + r12
    }

    /// Role 3, online: `t3 = a2*b2 + m1`.
    pub fn t3<R: Ring>(meter: &mut MulMeter, a2: R, b2: R, m1: R) -> R {
        meter.mul(Phase::Online, a2, b2) + m1
    }

    pub fn m2<R: Ring>(t2: R, z2: R) -> R {
        t2 - z2
    }

    pub fn m3<R: Ring>(t3: R, z3: R) -> R {
        t3 + z3
    }

    /// Role 2's output share `c3 = m3 - t2`.
    pub fn c3<R: Ring>(m3: R, t2: R) -> R {
        m3 - t2
    }

    /// Role 3's output share `c2 = t3 - m2`.
    pub fn c2<R: Ring>(t3: R, m2: R) -> R {
        t3 - m2
    }
}

/// Which parties play the three roles, plus non-member parties that take
/// part in this run as input dealers or output receivers.
#[derive(Debug, Clone)]
pub struct Instance3 {
    pub map: RoleMap,
    pub instance: u16,
    pub extra: Vec<PartyId>,
}

impl Instance3 {
    pub fn new(map: RoleMap, instance: u16) -> Instance3 {
        Instance3 { map, instance, extra: Vec::new() }
    }

    fn tag(&self, purpose: Purpose, id: GateId) -> DomainTag {
        DomainTag::new(DomainTag::PROTO3, purpose, self.instance, id)
    }

    fn p(&self, r: Role) -> PartyId {
        self.map.party(r)
    }

    fn set(&self, roles: &[Role]) -> KeySet {
        KeySet::of_roles(&self.map, roles)
    }

    fn present(&self, p: PartyId) -> bool {
        self.map.role_of(p).is_some() || self.extra.contains(&p)
    }
}

/// Where a run starts: from scratch, or after layer `layer` with shares
/// already in place (indexed by gate id, `None` for dead wires).
pub enum Start3<R> {
    Fresh,
    Resume { layer: usize, shares: Vec<Option<Share3<R>>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dealer {
    Role(u8),
    Outside(PartyId),
}

fn dealer(inst: &Instance3, owner: PartyId) -> Dealer {
    match inst.map.role_of(owner) {
        Some(r) => Dealer::Role(r.0 + 1),
        None => Dealer::Outside(owner),
    }
}

fn outside_set(inst: &Instance3, owner: PartyId) -> KeySet {
    KeySet::of(&[owner, inst.p(Role::R1)])
}

fn linear<R: Ring>(role: u8, kind: &GateKind, sh: &[Share3<R>]) -> Option<Share3<R>> {
    Some(match *kind {
        GateKind::Add(a, b) => {
            let (x, y) = (sh[a as usize], sh[b as usize]);
            [x[0] + y[0], x[1] + y[1]]
        }
        GateKind::ConstAdd(a, c) => {
            let x = sh[a as usize];
            let c = R::from_u64(c);
            match role {
                1 => x,
                2 => [x[0], x[1] + c],
                _ => [x[0] + c, x[1]],
            }
        }
        GateKind::ConstMul(a, c) => {
            let x = sh[a as usize];
            let c = R::from_u64(c);
            [x[0] * c, x[1] * c]
        }
        _ => return None,
    })
}

/// Runs one role-playing party to completion and returns the outputs it
/// learned, keyed by output gate id.
pub fn run_member<R: Ring>(
    s: &mut Session,
    c: &Circuit,
    inst: &Instance3,
    inputs: &BTreeMap<GateId, u64>,
    start: Start3<R>,
) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
    let role = inst.map.role_of(s.me).expect("member of the instance").0 + 1;
    let (r1, r2, r3) = (inst.p(Role::R1), inst.p(Role::R2), inst.p(Role::R3));
    let s12 = inst.set(&[Role::R1, Role::R2]);
    let s13 = inst.set(&[Role::R1, Role::R3]);
    let n = c.len();
    let (fresh, first_layer, mut sh) = match start {
        Start3::Fresh => (true, 0, vec![[R::zero(); 2]; n]),
        Start3::Resume { layer, shares } => {
            (false, layer + 1, shares.into_iter().map(|x| x.unwrap_or([R::zero(); 2])).collect())
        }
    };
    let layers = &c.layers()[first_layer.min(c.layers().len())..];
    let mul_base = layers.iter().flat_map(|l| l.muls.first()).next().and_then(|&g| c.mul_index(g)).unwrap_or(0);
    let n_mul: usize = layers.iter().map(|l| l.muls.len()).sum();

    // Inputs grouped by dealer, in gate order.
    let mut dealt: BTreeMap<PartyId, Vec<GateId>> = BTreeMap::new();
    if fresh {
        for g in c.inputs() {
            let GateKind::Input { owner } = g.kind else { unreachable!() };
            dealt.entry(owner).or_default().push(g.id);
        }
    }
    let outside: Vec<(PartyId, Vec<GateId>)> = dealt
        .iter()
        .filter(|(p, _)| inst.map.role_of(**p).is_none())
        .map(|(p, g)| (*p, g.clone()))
        .collect();
    let value = |g: GateId| R::from_u64(inputs[&g]);

    // Offline.
    s.round();
    let mut m1s: Vec<R> = Vec::new();
    let mut outside_x2: Vec<R> = Vec::new();
    if role == 1 {
        for layer in layers {
            for &g in layer.muls.iter().chain(&layer.linear) {
                let gate = c.gate(g);
                match gate.kind {
                    GateKind::Input { owner } => {
                        if !fresh {
                            continue;
                        }
                        let tag = inst.tag(Purpose::InputMask, g);
                        sh[g as usize] = match dealer(inst, owner) {
                            Dealer::Role(1) => [s.draw(s12, tag)?, -value(g)],
                            Dealer::Role(2) => [s.draw(s12, tag)?, R::zero()],
                            Dealer::Role(_) => [R::zero(), s.draw(s13, tag)?],
                            Dealer::Outside(o) => {
                                let set = outside_set(inst, o);
                                let x2 = s.keys.draw(set, tag, 0)?;
                                outside_x2.push(x2);
                                [x2, s.keys.draw(set, tag, 1)?]
                            }
                        };
                    }
                    GateKind::Mul(a, b) => {
                        let (x, y) = (sh[a as usize], sh[b as usize]);
                        let r12 = s.draw(s12, inst.tag(Purpose::MulPad, g))?;
                        let z2 = s.draw(s12, inst.tag(Purpose::OutMaskZ2, g))?;
                        let z3 = s.draw(s13, inst.tag(Purpose::OutMaskZ3, g))?;
                        m1s.push(algebra::m1(&mut s.meter, x[0], x[1], y[0], y[1], r12));
                        sh[g as usize] = [z2, z3];
                    }
                    GateKind::Output { .. } => {}
                    ref k => sh[g as usize] = linear(1, k, &sh).expect("linear gate"),
                }
            }
        }
        s.send(r3, Phase::Offline, MsgKind::Mul3M1, 0, &m1s)?;
        s.send(r2, Phase::Offline, MsgKind::ShareMask, 0, &outside_x2)?;
    } else if role == 3 {
        m1s = s.recv(r1, MsgKind::Mul3M1, n_mul)?;
    } else {
        let count: usize = outside.iter().map(|(_, g)| g.len()).sum();
        outside_x2 = s.recv(r1, MsgKind::ShareMask, count)?;
    }

    // Input sharing.
    s.round();
    if fresh {
        let by_role = |r: u8| -> Vec<GateId> {
            dealt
                .iter()
                .filter(|(p, _)| dealer(inst, **p) == Dealer::Role(r))
                .flat_map(|(_, g)| g.iter().copied())
                .collect()
        };
        let (d1, d2, d3) = (by_role(1), by_role(2), by_role(3));
        match role {
            1 => {
                let a2: Vec<R> = d1.iter().map(|&g| value(g) + sh[g as usize][0]).collect();
                s.send(r3, Phase::Online, MsgKind::Share, 0, &a2)?;
            }
            2 => {
                let mut a2 = Vec::new();
                for &g in &d2 {
                    let x2 = s.draw(s12, inst.tag(Purpose::InputMask, g))?;
                    sh[g as usize] = [x2, value(g)];
                    a2.push(value(g) + x2);
                }
                s.send(r3, Phase::Online, MsgKind::Share, 0, &a2)?;
                for &g in &d1 {
                    sh[g as usize] = [s.draw(s12, inst.tag(Purpose::InputMask, g))?, R::zero()];
                }
                let a3: Vec<R> = s.recv(r3, MsgKind::Share, d3.len())?;
                for (&g, v) in d3.iter().zip(a3) {
                    sh[g as usize] = [R::zero(), v];
                }
                let mut x2s = outside_x2.iter();
                for (o, gates) in &outside {
                    let a3: Vec<R> = s.recv(*o, MsgKind::Share, gates.len())?;
                    for (&g, v) in gates.iter().zip(a3) {
                        sh[g as usize] = [*x2s.next().expect("mask for every outside input"), v];
                    }
                }
            }
            _ => {
                let mut a3 = Vec::new();
                for &g in &d3 {
                    let x3 = s.draw(s13, inst.tag(Purpose::InputMask, g))?;
                    a3.push(value(g) + x3);
                    sh[g as usize] = [value(g), R::zero()];
                }
                s.send(r2, Phase::Online, MsgKind::Share, 0, &a3)?;
                for (from, gates) in [(r1, &d1), (r2, &d2)] {
                    let a2: Vec<R> = s.recv(from, MsgKind::Share, gates.len())?;
                    for (&g, v) in gates.iter().zip(a2) {
                        sh[g as usize] = [v, R::zero()];
                    }
                }
                for (o, gates) in &outside {
                    let a2: Vec<R> = s.recv(*o, MsgKind::Share, gates.len())?;
                    for (&g, v) in gates.iter().zip(a2) {
                        sh[g as usize] = [v, R::zero()];
                    }
                }
            }
        }
    }

    // Online evaluation by roles 2 and 3.
    if role != 1 {
        let first = first_layer;
        for (li, layer) in layers.iter().enumerate().map(|(i, l)| (i + first, l)) {
            if !layer.muls.is_empty() {
                s.round();
                if role == 2 {
                    let mut t2s = Vec::with_capacity(layer.muls.len());
                    let mut m2s = Vec::with_capacity(layer.muls.len());
                    let mut z2s = Vec::with_capacity(layer.muls.len());
                    for &g in &layer.muls {
                        let GateKind::Mul(a, b) = c.gate(g).kind else { unreachable!() };
                        let ([x2, a3], [y2, b3]) = (sh[a as usize], sh[b as usize]);
                        let r12 = s.draw(s12, inst.tag(Purpose::MulPad, g))?;
                        let z2 = s.draw(s12, inst.tag(Purpose::OutMaskZ2, g))?;
                        let t2 = algebra::t2(&mut s.meter, a3, b3, x2, y2, r12);
                        m2s.push(algebra::m2(t2, z2));
                        t2s.push(t2);
                        z2s.push(z2);
                    }
                    s.send(r3, Phase::Online, MsgKind::Mul3M2, li as u32, &m2s)?;
                    let m3s: Vec<R> = s.recv(r3, MsgKind::Mul3M3, layer.muls.len())?;
                    for (i, &g) in layer.muls.iter().enumerate() {
                        sh[g as usize] = [z2s[i], algebra::c3(m3s[i], t2s[i])];
                    }
                } else {
                    let mut t3s = Vec::with_capacity(layer.muls.len());
                    let mut m3s = Vec::with_capacity(layer.muls.len());
                    for &g in &layer.muls {
                        let GateKind::Mul(a, b) = c.gate(g).kind else { unreachable!() };
                        let (a2, b2) = (sh[a as usize][0], sh[b as usize][0]);
                        let m1 = m1s[(c.mul_index(g).expect("mul gate") - mul_base) as usize];
                        let z3 = s.draw(s13, inst.tag(Purpose::OutMaskZ3, g))?;
                        let t3 = algebra::t3(&mut s.meter, a2, b2, m1);
                        m3s.push(algebra::m3(t3, z3));
                        t3s.push(t3);
                    }
                    s.send(r2, Phase::Online, MsgKind::Mul3M3, li as u32, &m3s)?;
                    let m2s: Vec<R> = s.recv(r2, MsgKind::Mul3M2, layer.muls.len())?;
                    for (i, &g) in layer.muls.iter().enumerate() {
                        sh[g as usize] = [algebra::c2(t3s[i], m2s[i]), R::zero()];
                    }
                }
            }
            for &g in &layer.linear {
                if let Some(v) = linear(role, &c.gate(g).kind, &sh) {
                    sh[g as usize] = v;
                }
            }
        }
    }

    open(s, c, inst, role, &sh)
}

/// Output reconstruction: role 3 sends `a2`, role 1 sends `x2` where needed.
fn open<R: Ring>(
    s: &mut Session,
    c: &Circuit,
    inst: &Instance3,
    role: u8,
    sh: &[Share3<R>],
) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
    let (r1, r3) = (inst.p(Role::R1), inst.p(Role::R3));
    let outs: Vec<(GateId, GateId, crate::circuit::Recipients)> = c
        .outputs()
        .map(|g| match g.kind {
            GateKind::Output { src, recipients } => (g.id, src, recipients),
            _ => unreachable!(),
        })
        .collect();
    let receivers: Vec<PartyId> =
        crate::party::COMPUTE_PARTIES.into_iter().filter(|p| inst.present(*p)).collect();
    let for_party = |p: PartyId| -> Vec<&(GateId, GateId, crate::circuit::Recipients)> {
        outs.iter().filter(|o| o.2.contains(p)).collect()
    };
    s.round();
    match role {
        3 => {
            for &p in &receivers {
                if p != s.me {
                    let a2: Vec<R> = for_party(p).iter().map(|o| sh[o.1 as usize][0]).collect();
                    s.send(p, Phase::Online, MsgKind::Reveal, 0, &a2)?;
                }
            }
        }
        1 => {
            for &p in &receivers {
                if p != s.me && inst.map.role_of(p).is_none_or(|r| r == Role::R3) {
                    let x2: Vec<R> = for_party(p).iter().map(|o| sh[o.1 as usize][0]).collect();
                    s.send(p, Phase::Online, MsgKind::Reveal, 0, &x2)?;
                }
            }
        }
        _ => {}
    }
    let mine = for_party(s.me);
    let mut out = BTreeMap::new();
    match role {
        3 => {
            let x2: Vec<R> = s.recv(r1, MsgKind::Reveal, mine.len())?;
            for (o, x) in mine.iter().zip(x2) {
                out.insert(o.0, (sh[o.1 as usize][0] - x).to_u64());
            }
        }
        _ => {
            let a2: Vec<R> = s.recv(r3, MsgKind::Reveal, mine.len())?;
            for (o, a) in mine.iter().zip(a2) {
                out.insert(o.0, (a - sh[o.1 as usize][0]).to_u64());
            }
        }
    }
    Ok(out)
}

/// A party outside the three roles: deals its inputs (on a fresh start) and
/// receives any outputs addressed to it.
pub fn run_outsider<R: Ring>(
    s: &mut Session,
    c: &Circuit,
    inst: &Instance3,
    inputs: &BTreeMap<GateId, u64>,
    fresh: bool,
) -> Result<BTreeMap<GateId, u64>, ProtocolError> {
    let (r1, r2, r3) = (inst.p(Role::R1), inst.p(Role::R2), inst.p(Role::R3));
    s.round();
    s.round();
    if fresh {
        let set = outside_set(inst, s.me);
        let mut a3s = Vec::new();
        let mut a2s = Vec::new();
        for g in c.inputs() {
            if g.kind != (GateKind::Input { owner: s.me }) {
                continue;
            }
            let tag = inst.tag(Purpose::InputMask, g.id);
            let v = R::from_u64(inputs[&g.id]);
            a2s.push(v + s.keys.draw::<R>(set, tag, 0)?);
            a3s.push(v + s.keys.draw::<R>(set, tag, 1)?);
        }
        s.send(r2, Phase::Online, MsgKind::Share, 0, &a3s)?;
        s.send(r3, Phase::Online, MsgKind::Share, 0, &a2s)?;
    }
    s.round();
    let mine: Vec<GateId> = c
        .outputs()
        .filter(|g| matches!(g.kind, GateKind::Output { recipients, .. } if recipients.contains(s.me)))
        .map(|g| g.id)
        .collect();
    let a2: Vec<R> = s.recv(r3, MsgKind::Reveal, mine.len())?;
    let x2: Vec<R> = s.recv(r1, MsgKind::Reveal, mine.len())?;
    Ok(mine.iter().zip(a2.iter().zip(x2)).map(|(&g, (&a, x))| (g, (a - x).to_u64())).collect())
}
