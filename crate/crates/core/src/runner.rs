//! Runs every party of a protocol in its own thread over the simulated or
//! TCP transport and collects outputs and metrics.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::circuit::{input_values, Circuit, CircuitError, GateId, GateKind, Inputs};
use crate::party::{PartyId, RoleMap, COMPUTE_PARTIES};
use crate::proto3::{self, Instance3, Start3};
use crate::proto4::god::{fallback_map, FALLBACK_SETS};
use crate::proto4::{self, Config4, Instance4};
use crate::ring::{Bit, MulMeter, Ring, Width, Zk};
use crate::scheduler::permutation_schedule;
use crate::session::{ProtocolError, Session};
use crate::tape::KeyStore;
use crate::transport::tamper::{AbortForger, TamperEndpoint, TamperRule};
use crate::transport::{sim, tcp, Endpoint, Metrics, NetError, NetProfile};

#[derive(Debug, Clone)]
pub enum Backend {
    Sim(NetProfile),
    /// Loopback TCP. Endpoints come from the profile when it lists them.
    Tcp(NetProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Homogenize {
    #[default]
    Off,
    Perm,
    Rotate,
}

impl FromStr for Homogenize {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Homogenize::Off),
            "perm" => Ok(Homogenize::Perm),
            "rotate" => Ok(Homogenize::Rotate),
            _ => Err(format!("unknown homogenization `{s}` (off, perm, rotate)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub backend: Backend,
    pub timeout: Duration,
    pub seed: [u8; 16],
    pub homogenize: Homogenize,
    /// Multiplication layers between verification checkpoints.
    pub checkpoint_interval: usize,
    /// The corrupted party and what it does to its outgoing messages.
    pub corrupt: Option<(PartyId, Vec<TamperRule>)>,
    pub fair: bool,
    pub god: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            backend: Backend::Sim(NetProfile::new()),
            timeout: Duration::from_secs(10),
            seed: *b"hetmpc-test-seed",
            homogenize: Homogenize::Off,
            checkpoint_interval: 10,
            corrupt: None,
            fair: false,
            god: false,
        }
    }
}

/// 16-byte master seed from a number, for CLI and tests.
pub fn seed_from(n: u64) -> [u8; 16] {
    let mut s = [0u8; 16];
    s[..8].copy_from_slice(&n.to_le_bytes());
    s[8..].copy_from_slice(b"hetmpc!!");
    s
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{0}")]
    Usage(String),
}

pub type PartyOutcome = Result<BTreeMap<GateId, u64>, ProtocolError>;

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub outputs: BTreeMap<PartyId, PartyOutcome>,
    pub metrics: Metrics,
    pub meters: BTreeMap<PartyId, MulMeter>,
    /// Slowest party's elapsed time (virtual for the simulator).
    pub elapsed_ms: f64,
    pub instances: usize,
    /// Frames the corrupted party's rules changed or dropped.
    pub tampered: u64,
    /// Fallback segments started after an abort.
    pub resets: u32,
    /// Parties excluded from the final segment.
    pub excluded: Vec<PartyId>,
    /// Checkpoint the fallback resumed from; `None` if it started over.
    pub resumed_from: Option<u32>,
}

impl RunReport {
    /// Outputs of the parties that are not corrupted, if they all agree and
    /// none aborted.
    pub fn honest_output(&self, corrupt: Option<PartyId>) -> Option<BTreeMap<GateId, u64>> {
        let mut merged = BTreeMap::new();
        for (p, r) in &self.outputs {
            if Some(*p) == corrupt {
                continue;
            }
            for (g, v) in r.as_ref().ok()? {
                if *merged.entry(*g).or_insert(*v) != *v {
                    return None;
                }
            }
        }
        Some(merged)
    }

    pub fn aborted(&self, p: PartyId) -> bool {
        self.outputs.get(&p).is_some_and(|r| r.is_err())
    }

    fn absorb(&mut self, seg: Vec<PartyRun<PartyOutcome>>) {
        for r in seg {
            self.metrics.merge(&r.metrics);
            self.meters.entry(r.party).or_default().merge(&r.meter);
            self.elapsed_ms = self.elapsed_ms.max(r.elapsed_ms);
            self.tampered += r.tampered;
            self.outputs.insert(r.party, r.value);
        }
    }
}

pub(crate) struct PartyRun<T> {
    pub party: PartyId,
    pub value: T,
    pub meter: MulMeter,
    pub metrics: Metrics,
    pub elapsed_ms: f64,
    pub tampered: u64,
}

/// Extra per-party hook for building a verdict forger on the corrupted party.
pub(crate) type ForgeFactory<'a> = &'a (dyn Fn(PartyId) -> Option<AbortForger> + Sync);

/// Spawns one thread per party. `body` gets the party's session; the meter
/// it accumulates is returned with the result.
pub(crate) fn spawn_parties<T, F>(
    parties: &[PartyId],
    opts: &RunOptions,
    width: Width,
    forge: Option<ForgeFactory<'_>>,
    body: F,
) -> Result<Vec<PartyRun<T>>, RunError>
where
    T: Send,
    F: Fn(&mut Session) -> T + Sync,
{
    let endpoints: Vec<Box<dyn Endpoint>> = match &opts.backend {
        Backend::Sim(profile) => {
            sim::mesh(parties, profile, opts.timeout).into_iter().map(|e| Box::new(e) as Box<dyn Endpoint>).collect()
        }
        Backend::Tcp(profile) => tcp::mesh(parties, &profile.endpoints, opts.timeout)?
            .into_iter()
            .map(|e| Box::new(e) as Box<dyn Endpoint>)
            .collect(),
    };
    let body = &body;
    let results = thread::scope(|scope| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|ep| {
                let me = ep.me();
                let keys = KeyStore::from_master(me, &opts.seed);
                let rules = opts.corrupt.as_ref().filter(|(p, _)| *p == me).map(|(_, r)| r.clone());
                let forger = forge.and_then(|f| f(me));
                scope.spawn(move || match rules {
                    Some(rules) => {
                        let mut t = TamperEndpoint::new(ep, width, rules, forger);
                        let (value, meter) = {
                            let mut s = Session::new(&mut t, &keys);
                            let v = body(&mut s);
                            (v, s.meter)
                        };
                        let run = PartyRun {
                            party: me,
                            value,
                            meter,
                            metrics: t.metrics().clone(),
                            elapsed_ms: t.elapsed_ms(),
                            tampered: t.applied(),
                        };
                        drop(t);
                        run
                    }
                    None => {
                        let mut ep = ep;
                        let (value, meter) = {
                            let mut s = Session::new(ep.as_mut(), &keys);
                            let v = body(&mut s);
                            (v, s.meter)
                        };
                        PartyRun {
                            party: me,
                            value,
                            meter,
                            metrics: ep.metrics().clone(),
                            elapsed_ms: ep.elapsed_ms(),
                            tampered: 0,
                        }
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("party thread panicked")).collect()
    });
    Ok(results)
}

/// Input values owned by `p`, keyed by input gate id.
pub(crate) fn own_inputs(c: &Circuit, all: &BTreeMap<GateId, u64>, p: PartyId) -> BTreeMap<GateId, u64> {
    c.inputs()
        .filter(|g| g.kind == GateKind::Input { owner: p })
        .map(|g| (g.id, all[&g.id]))
        .collect()
}

pub(crate) fn has_outsider(c: &Circuit) -> bool {
    c.inputs().any(|g| g.kind == GateKind::Input { owner: PartyId::Outsider })
}

/// Calls `$f::<R>(args)` for the ring matching `$width`.
macro_rules! dispatch {
    ($width:expr, $f:ident($($arg:expr),*)) => {
        match $width {
            Width::W1 => $f::<Bit>($($arg),*),
            Width::W8 => $f::<Zk<u8>>($($arg),*),
            Width::W16 => $f::<Zk<u16>>($($arg),*),
            Width::W32 => $f::<Zk<u32>>($($arg),*),
            Width::W64 => $f::<Zk<u64>>($($arg),*),
        }
    };
}

/// Semi-honest three-party run with P1, P2, P3 (and the outsider if it owns
/// inputs). `Homogenize::Perm` evaluates all six role assignments in turn.
pub fn run3(c: &Circuit, inputs: &Inputs, opts: &RunOptions) -> Result<RunReport, RunError> {
    if c.inputs().any(|g| g.kind == GateKind::Input { owner: PartyId::P4 }) {
        return Err(RunError::Usage("P4 does not take part in the three-party protocol".into()));
    }
    let maps = match opts.homogenize {
        Homogenize::Off => vec![RoleMap::identity(3)],
        Homogenize::Perm => permutation_schedule(3).expect("3 parties"),
        Homogenize::Rotate => return Err(RunError::Usage("rotation applies to the four-party protocol".into())),
    };
    let values = input_values(c, inputs)?;
    dispatch!(c.width(), run3_as(c, &values, &maps, opts))
}

fn run3_as<R: Ring>(
    c: &Circuit,
    values: &BTreeMap<GateId, u64>,
    maps: &[RoleMap],
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    let mut parties = vec![PartyId::P1, PartyId::P2, PartyId::P3];
    let extra = if has_outsider(c) { vec![PartyId::Outsider] } else { vec![] };
    parties.extend(&extra);
    let runs = spawn_parties(&parties, opts, c.width(), None, |s| {
        let mine = own_inputs(c, values, s.me);
        let mut out = BTreeMap::new();
        for (i, map) in maps.iter().enumerate() {
            let inst = Instance3 { map: *map, instance: i as u16, extra: extra.clone() };
            let r = if s.me == PartyId::Outsider {
                proto3::run_outsider::<R>(s, c, &inst, &mine, true)
            } else {
                proto3::run_member::<R>(s, c, &inst, &mine, Start3::Fresh)
            };
            match r {
                Ok(o) if i == 0 => out = o,
                Ok(_) => {}
                Err(e) => {
                    s.abort_to(&parties, 0);
                    return Err(e);
                }
            }
        }
        Ok(out)
    })?;
    let mut report = RunReport { instances: maps.len(), ..RunReport::default() };
    report.absorb(runs);
    Ok(report)
}

/// Four-party run secure against one malicious party. Inputs may come from
/// any of P1..P4.
pub fn run4(c: &Circuit, inputs: &Inputs, opts: &RunOptions) -> Result<RunReport, RunError> {
    if has_outsider(c) {
        return Err(RunError::Usage("the four-party protocol takes no outsider inputs".into()));
    }
    if opts.god && opts.homogenize != Homogenize::Off {
        return Err(RunError::Usage("the fallback runs with fixed roles only".into()));
    }
    let maps = match opts.homogenize {
        Homogenize::Perm => permutation_schedule(4).expect("4 parties"),
        _ => vec![RoleMap::identity(4)],
    };
    let values = input_values(c, inputs)?;
    if opts.god {
        return dispatch!(c.width(), run4_god(c, &values, opts));
    }
    dispatch!(c.width(), run4_as(c, &values, &maps, opts))
}

pub(crate) fn config4(opts: &RunOptions) -> Config4 {
    Config4 {
        rotate: opts.homogenize == Homogenize::Rotate,
        checkpoint_interval: opts.checkpoint_interval,
        fair: opts.fair,
        snapshots: opts.god,
    }
}

fn run4_as<R: Ring>(
    c: &Circuit,
    values: &BTreeMap<GateId, u64>,
    maps: &[RoleMap],
    opts: &RunOptions,
) -> Result<RunReport, RunError> {
    let parties = COMPUTE_PARTIES.to_vec();
    let cfg = config4(opts);
    let forge = |p: PartyId| proto4::abort_forger(p, &opts.seed);
    let runs = spawn_parties(&parties, opts, c.width(), Some(&forge), |s| {
        let mine = own_inputs(c, values, s.me);
        let mut out = BTreeMap::new();
        for (i, map) in maps.iter().enumerate() {
            let inst = Instance4 { map: *map, instance: i as u16, cfg };
            match proto4::run_party::<R>(s, c, &inst, &mine).result {
                Ok(o) if i == 0 => out = o,
                Ok(_) => {}
                Err(e) => {
                    s.abort_to(&parties, 0);
                    return Err(e);
                }
            }
        }
        Ok(out)
    })?;
    let mut report = RunReport { instances: maps.len(), ..RunReport::default() };
    report.absorb(runs);
    Ok(report)
}

/// Four-party run that falls back to three-party segments after an abort,
/// resuming from the last checkpoint every party passed.
///
/// The fallback protocol is only semi-honest. A segment in which the
/// corrupted party still takes part and changes a message is counted as
/// failed, standing in for an actively secure three-party protocol.
fn run4_god<R: Ring>(c: &Circuit, values: &BTreeMap<GateId, u64>, opts: &RunOptions) -> Result<RunReport, RunError> {
    let parties = COMPUTE_PARTIES.to_vec();
    let inst = Instance4 { map: RoleMap::identity(4), instance: 0, cfg: config4(opts) };
    let corrupt = opts.corrupt.as_ref().map(|c| c.0);
    let runs = spawn_parties(&parties, opts, c.width(), None, |s| {
        let mine = own_inputs(c, values, s.me);
        let out = proto4::run_party::<R>(s, c, &inst, &mine);
        if out.result.is_err() {
            s.abort_to(&parties, 0);
        }
        out
    })?;
    let mut report = RunReport { instances: 1, ..RunReport::default() };
    let mut snaps: BTreeMap<PartyId, Vec<proto4::Snapshot<R>>> = BTreeMap::new();
    let first: Vec<PartyRun<PartyOutcome>> = runs
        .into_iter()
        .map(|r| {
            snaps.insert(r.party, r.value.snapshots);
            PartyRun { party: r.party, value: r.value.result, meter: r.meter, metrics: r.metrics, elapsed_ms: r.elapsed_ms, tampered: r.tampered }
        })
        .collect();
    let ok = first.iter().all(|r| r.value.is_ok());
    report.absorb(first);
    if ok {
        return Ok(report);
    }
    let resume = snaps.values().map(|v| v.last().map(|s| s.checkpoint)).min().flatten();
    report.resumed_from = resume;
    for (i, set) in FALLBACK_SETS.into_iter().enumerate() {
        report.resets += 1;
        let out_of_set = COMPUTE_PARTIES.into_iter().find(|p| !set.contains(p)).expect("one party left out");
        report.excluded = vec![out_of_set];
        let map = fallback_map(set);
        let segment = 100 + i as u16;
        let inst3 = Instance3 { map, instance: segment, extra: vec![out_of_set] };
        let snaps = &snaps;
        let runs = spawn_parties(&parties, opts, c.width(), None, |s| {
            let mine = own_inputs(c, values, s.me);
            let r = if s.me == out_of_set {
                proto3::run_outsider::<R>(s, c, &inst3, &mine, resume.is_none())
            } else {
                match resume {
                    None => proto3::run_member::<R>(s, c, &inst3, &mine, Start3::Fresh),
                    Some(cp) => {
                        let snap = snaps[&s.me].iter().find(|x| x.checkpoint == cp).expect("passed checkpoint");
                        proto4::god::reshare::<R>(s, &map, segment, &snap.shares).and_then(|shares| {
                            proto3::run_member::<R>(s, c, &inst3, &mine, Start3::Resume { layer: snap.layer, shares })
                        })
                    }
                }
            };
            if r.is_err() {
                s.abort_to(&parties, 0);
            }
            r
        })?;
        let misbehaved = runs.iter().any(|r| Some(r.party) == corrupt && r.party != out_of_set && r.tampered > 0);
        let ok = runs.iter().all(|r| r.value.is_ok());
        report.absorb(runs);
        if ok && !misbehaved {
            return Ok(report);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::evaluate_cleartext;
    use crate::circuit::random::{mul_chain, random_circuit, random_inputs, RandomSpec};
    use crate::party::EVALUATORS;
    use rand::SeedableRng;

    #[test]
    fn three_party_matches_cleartext() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for width in [Width::W1, Width::W8, Width::W64] {
            let c = random_circuit(&mut rng, &RandomSpec::new(width, 120, 6, &EVALUATORS));
            let x = random_inputs(&mut rng, &c);
            let want = evaluate_cleartext(&c, &x).unwrap();
            for h in [Homogenize::Off, Homogenize::Perm] {
                let opts = RunOptions { homogenize: h, ..RunOptions::default() };
                let r = run3(&c, &x, &opts).unwrap();
                for p in EVALUATORS {
                    assert_eq!(r.outputs[&p].as_ref().unwrap(), &want, "{width:?} {h:?} {p}");
                }
            }
        }
    }

    #[test]
    fn three_party_channel_counts() {
        use crate::ring::Phase;
        use crate::transport::MsgKind;
        use PartyId::*;
        let c = mul_chain(Width::W64, 12, [P1, P2]);
        let x = Inputs::from([("a".to_string(), 3), ("b".to_string(), 5)]);
        let r = run3(&c, &x, &RunOptions::default()).unwrap();
        let t = r.metrics.mul_traffic();
        assert_eq!(t.active(Phase::Offline), vec![(P1, P3)]);
        assert_eq!(t.active(Phase::Online), vec![(P2, P3), (P3, P2)]);
        assert_eq!((t.offline(), t.online()), (12, 24));
        assert_eq!(r.meters.values().fold(MulMeter::default(), |mut a, m| { a.merge(m); a }), MulMeter { offline: 24, online: 36 });
        assert_eq!(r.metrics.rounds(P2, P3, |k| k.kind.is_mul()), 12);
        assert_eq!(r.metrics.rounds(P1, P3, |k| k.kind.is_mul()), 1);
        let shares = r.metrics.elements(|k| k.kind == MsgKind::Share);
        assert_eq!(shares, 2);
    }

    #[test]
    fn four_party_matches_cleartext() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        for width in [Width::W1, Width::W8, Width::W64] {
            let c = random_circuit(&mut rng, &RandomSpec::new(width, 120, 6, &COMPUTE_PARTIES));
            let x = random_inputs(&mut rng, &c);
            let want = evaluate_cleartext(&c, &x).unwrap();
            for (h, fair) in [(Homogenize::Off, false), (Homogenize::Rotate, false), (Homogenize::Off, true)] {
                let opts = RunOptions { homogenize: h, fair, checkpoint_interval: 2, ..RunOptions::default() };
                let r = run4(&c, &x, &opts).unwrap();
                for p in COMPUTE_PARTIES {
                    assert_eq!(r.outputs[&p].as_ref().unwrap(), &want, "{width:?} {h:?} fair={fair} {p}");
                }
            }
        }
    }

    #[test]
    fn four_party_all_role_assignments() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let c = random_circuit(&mut rng, &RandomSpec::new(Width::W16, 40, 4, &COMPUTE_PARTIES));
        let x = random_inputs(&mut rng, &c);
        let want = evaluate_cleartext(&c, &x).unwrap();
        let opts = RunOptions { homogenize: Homogenize::Perm, ..RunOptions::default() };
        let r = run4(&c, &x, &opts).unwrap();
        assert_eq!(r.instances, 24);
        assert_eq!(r.honest_output(None).unwrap(), want);
    }

    #[test]
    fn four_party_channel_counts() {
        use crate::ring::Phase;
        use PartyId::*;
        let c = mul_chain(Width::W64, 12, [P1, P2]);
        let x = Inputs::from([("a".to_string(), 3), ("b".to_string(), 5)]);
        let r = run4(&c, &x, &RunOptions::default()).unwrap();
        assert_eq!(r.honest_output(None).unwrap().len(), 1);
        let t = r.metrics.mul_traffic();
        assert_eq!(t.active(Phase::Offline), vec![(P1, P3), (P4, P1)]);
        assert_eq!(t.active(Phase::Online), vec![(P2, P3), (P3, P1), (P3, P2)]);
        assert_eq!((t.offline(), t.online()), (24, 36));
        assert_eq!(r.metrics.rounds(P2, P3, |k| k.kind.is_mul()), 12);
        assert_eq!(r.metrics.rounds(P1, P3, |k| k.kind.is_mul()), 1);
        assert_eq!(r.metrics.rounds(P4, P1, |k| k.kind.is_mul()), 1);
        assert!(r.metrics.rounds(P3, P1, |k| k.kind.is_mul()) <= 2);
    }

    #[test]
    fn fallback_walks_every_set() {
        use crate::transport::tamper::Mutation;
        use crate::transport::MsgKind;
        use PartyId::*;
        let c = mul_chain(Width::W16, 25, [P1, P4]);
        let x = Inputs::from([("a".to_string(), 3), ("b".to_string(), 5)]);
        let want = evaluate_cleartext(&c, &x).unwrap();
        let mut rules = vec![TamperRule::new(MsgKind::M3, Some(17), Mutation::AddDelta(1))];
        for k in [MsgKind::Mul3M1, MsgKind::Mul3M2, MsgKind::Mul3M3, MsgKind::Reshare] {
            rules.push(TamperRule::new(k, None, Mutation::AddDelta(1)));
        }
        let opts = RunOptions { god: true, checkpoint_interval: 5, corrupt: Some((P3, rules)), ..RunOptions::default() };
        let r = run4(&c, &x, &opts).unwrap();
        assert_eq!(r.resets, 4);
        assert_eq!(r.excluded, vec![P3]);
        assert_eq!(r.resumed_from, Some(3));
        assert_eq!(r.honest_output(Some(P3)).unwrap(), want);
    }

    #[test]
    fn sharing_cost_per_dealer() {
        use crate::circuit::parse_circuit;
        use crate::transport::MsgKind;
        for (owner, cost) in [("P1", 1), ("P2", 1), ("P3", 1), ("O", 2)] {
            let src = format!("ring 16; in v {owner}; cmul w v 1; out w ALL");
            let c = parse_circuit(&src).unwrap();
            let x = Inputs::from([("v".to_string(), 41)]);
            let r = run3(&c, &x, &RunOptions::default()).unwrap();
            assert_eq!(r.metrics.elements(|k| k.kind == MsgKind::Share), cost, "{owner}");
            assert_eq!(r.honest_output(None).unwrap().values().next(), Some(&41));
        }
    }

    #[test]
    fn tcp_backend_matches_cleartext() {
        use PartyId::*;
        let c = mul_chain(Width::W16, 5, [P2, P4]);
        let x = Inputs::from([("a".to_string(), 1234), ("b".to_string(), 77)]);
        let want = evaluate_cleartext(&c, &x).unwrap();
        let opts = RunOptions { backend: Backend::Tcp(NetProfile::new()), ..RunOptions::default() };
        assert_eq!(run4(&c, &x, &opts).unwrap().honest_output(None).unwrap(), want);
        let c3 = mul_chain(Width::W16, 5, [P2, P3]);
        assert_eq!(run3(&c3, &x, &opts).unwrap().honest_output(None).unwrap(), evaluate_cleartext(&c3, &x).unwrap());
    }
}
