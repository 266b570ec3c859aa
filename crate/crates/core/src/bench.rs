//! Built-in benchmark: measures per-gate communication and compares it with
//! the reference constants of both protocols.

use std::fmt;

use serde::Serialize;

use crate::circuit::random::{mul_chain, mul_grid};
use crate::circuit::{parse_circuit, Circuit, Inputs};
use crate::party::{PartyId, COMPUTE_PARTIES, EVALUATORS};
use crate::ring::{MulMeter, Phase, Width};
use crate::runner::{run3, run4, Homogenize, RunError, RunOptions, RunReport};
use crate::transport::MsgKind;

use PartyId::*;

/// A non-negative rational, compared exactly.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Frac(pub u64, pub u64);

impl PartialEq for Frac {
    fn eq(&self, o: &Frac) -> bool {
        self.0 as u128 * o.1 as u128 == o.0 as u128 * self.1 as u128
    }
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = gcd(self.0, self.1).max(1);
        match self.1 / g {
            1 => f.pad(&(self.0 / g).to_string()),
            d => f.pad(&format!("{}/{}", self.0 / g, d)),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub group: &'static str,
    pub metric: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl BenchRow {
    fn new(group: &'static str, metric: impl Into<String>, measured: impl fmt::Display, expected: impl fmt::Display) -> Self {
        let (m, e) = (measured.to_string(), expected.to_string());
        BenchRow { group, metric: metric.into(), pass: m == e, measured: m, expected: e }
    }

    fn frac(group: &'static str, metric: impl Into<String>, measured: Frac, expected: Frac) -> Self {
        BenchRow { group, metric: metric.into(), measured: measured.to_string(), expected: expected.to_string(), pass: measured == expected }
    }
}

fn chain_inputs() -> Inputs {
    Inputs::from([("a".to_string(), 3), ("b".to_string(), 5)])
}

fn meter_sum(r: &RunReport) -> MulMeter {
    let mut m = MulMeter::default();
    for x in r.meters.values() {
        m.merge(x);
    }
    m
}

fn channels(v: &[(PartyId, PartyId)]) -> String {
    let names: Vec<String> = v.iter().map(|(a, b)| format!("{a}->{b}")).collect();
    names.join(" ")
}

fn per_gate_rows(group: &'static str, r: &RunReport, gates: u64, depth: u64, parties: &[PartyId]) -> Vec<BenchRow> {
    let t = r.metrics.mul_traffic();
    let m = meter_sum(r);
    let n = parties.len() * (parties.len() - 1);
    let mut rows = vec![
        BenchRow::frac(group, "offline elements / gate", Frac(t.offline(), gates), Frac(if group == "3pc" { 1 } else { 2 }, 1)),
        BenchRow::frac(group, "online elements / gate", Frac(t.online(), gates), Frac(if group == "3pc" { 2 } else { 3 }, 1)),
    ];
    if group == "3pc" {
        rows.push(BenchRow::frac(group, "offline multiplications / gate", Frac(m.offline, gates), Frac(2, 1)));
        rows.push(BenchRow::frac(group, "online multiplications / gate", Frac(m.online, gates), Frac(3, 1)));
        rows.push(BenchRow::new(group, "active offline channels", format!("{} of {n}", t.active(Phase::Offline).len()), format!("1 of {n}")));
        rows.push(BenchRow::new(group, "active online channels", format!("{} of {n}", t.active(Phase::Online).len()), format!("2 of {n}")));
        rows.push(BenchRow::new(group, "offline channel", channels(&t.active(Phase::Offline)), "P1->P3"));
        rows.push(BenchRow::new(group, "online channels", channels(&t.active(Phase::Online)), "P2->P3 P3->P2"));
    } else {
        rows.push(BenchRow::new(group, "offline channels", channels(&t.active(Phase::Offline)), "P1->P3 P4->P1"));
        rows.push(BenchRow::new(group, "online channels", channels(&t.active(Phase::Online)), "P2->P3 P3->P1 P3->P2"));
        let unused = (n - t.per_channel.len()) as u64;
        rows.push(BenchRow::new(group, "unused channel directions", unused, 7));
        rows.push(BenchRow::frac(group, "offline multiplications / gate (info)", Frac(m.offline, gates), Frac(m.offline, gates)));
        rows.push(BenchRow::frac(group, "online multiplications / gate (info)", Frac(m.online, gates), Frac(m.online, gates)));
    }
    rows.push(BenchRow::new(group, "online rounds P2<->P3", r.metrics.rounds(P2, P3, |k| k.kind.is_mul() && k.phase == Phase::Online), depth));
    rows.push(BenchRow::new(group, "offline rounds P1->P3", r.metrics.rounds(P1, P3, |k| k.kind.is_mul() && k.phase == Phase::Offline), 1));
    rows
}

/// Elements per directed channel per gate per instance, for every channel
/// among `parties`; `None` if they differ.
fn uniform_share(r: &RunReport, parties: &[PartyId], gates: u64) -> Option<Frac> {
    let t = r.metrics.mul_traffic();
    let mut shares = Vec::new();
    for &a in parties {
        for &b in parties {
            if a != b {
                let (off, on) = t.get(a, b);
                shares.push(Frac(off + on, gates * r.instances as u64));
            }
        }
    }
    shares.windows(2).all(|w| w[0] == w[1]).then(|| shares[0])
}

pub fn sharing_circuit(owner: PartyId) -> Circuit {
    parse_circuit(&format!("ring 64; in v {owner}; cmul w v 1; out w ALL")).expect("valid circuit")
}

/// Runs every benchmark row.
pub fn bench_suite(opts: &RunOptions) -> Result<Vec<BenchRow>, RunError> {
    let mut rows = Vec::new();
    let depth = 12;
    let chain = mul_chain(Width::W64, depth, [P1, P2]);
    let x = chain_inputs();
    let gates = depth as u64;

    let r3 = run3(&chain, &x, opts)?;
    rows.extend(per_gate_rows("3pc", &r3, gates, depth as u64, &EVALUATORS));

    let r4 = run4(&chain, &x, opts)?;
    rows.extend(per_gate_rows("4pc", &r4, gates, depth as u64, &COMPUTE_PARTIES));
    let checkpoints = (1 + depth / opts.checkpoint_interval.max(1) + 1) as u64;
    let p31 = r4.metrics.rounds(P3, P1, |k| k.kind.is_mul());
    rows.push(BenchRow::new("4pc", "P3->P1 rounds within checkpoints", p31 <= checkpoints, true));

    for owner in [P1, P2, P3, Outsider] {
        let r = run3(&sharing_circuit(owner), &Inputs::from([("v".to_string(), 41)]), opts)?;
        let sent = r.metrics.elements(|k| k.kind == MsgKind::Share);
        let expected = if owner == Outsider { 2 } else { 1 };
        rows.push(BenchRow::new("sharing", format!("elements, dealer {owner}"), sent, expected));
    }

    let grid = mul_grid(Width::W64, 60, 10, [P1, P2]);
    let g = grid.muls().len() as u64;
    let perm = RunOptions { homogenize: Homogenize::Perm, ..opts.clone() };
    let r = run3(&grid, &x, &perm)?;
    let share = uniform_share(&r, &EVALUATORS, g);
    rows.push(BenchRow::new("homogenize", "3pc permutations, per channel", share.map_or("uneven".into(), |f| f.to_string()), Frac(1, 2)));
    let r = run4(&grid, &x, &perm)?;
    let share = uniform_share(&r, &COMPUTE_PARTIES, g);
    rows.push(BenchRow::new("homogenize", "4pc permutations, per channel", share.map_or("uneven".into(), |f| f.to_string()), Frac(5, 12)));
    let rot = RunOptions { homogenize: Homogenize::Rotate, ..opts.clone() };
    let r = run4(&grid, &x, &rot)?;
    let t = r.metrics.mul_traffic();
    for (a, b) in [(P1, P2), (P2, P1), (P1, P3), (P3, P1), (P2, P3), (P3, P2)] {
        let (off, on) = t.get(a, b);
        rows.push(BenchRow::frac("homogenize", format!("rotation {a}->{b} offline"), Frac(off, g), Frac(1, 6)));
        rows.push(BenchRow::frac("homogenize", format!("rotation {a}->{b} online"), Frac(on, g), Frac(1, 2)));
    }
    for e in EVALUATORS {
        let (off, on) = t.get(P4, e);
        rows.push(BenchRow::frac("homogenize", format!("rotation P4->{e}"), Frac(off + on, g), Frac(1, 3)));
    }
    Ok(rows)
}

pub fn render(rows: &[BenchRow]) -> String {
    let mut s = format!("{:<11} {:<40} {:>18} {:>18}  result\n", "group", "metric", "measured", "expected");
    for r in rows {
        s += &format!(
            "{:<11} {:<40} {:>18} {:>18}  {}\n",
            r.group,
            r.metric,
            r.measured,
            r.expected,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}
