//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints its own PASS/FAIL line; exits non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};

use hetmpc::circuit::random::{mul_chain, mul_grid, random_circuit, random_inputs, RandomSpec};
use hetmpc::circuit::{evaluate_cleartext, parse_circuit, Inputs};
use hetmpc::harness::{run_scenario, Outcome, Proto};
use hetmpc::party::{PartyId, COMPUTE_PARTIES, EVALUATORS};
use hetmpc::proto4::{FAIR_COMMIT_ID, FAIR_ROUND_A, FAIR_ROUND_B};
use hetmpc::ring::{MulMeter, Phase};
use hetmpc::runner::{run3, run4, Homogenize, RunOptions, RunReport};
use hetmpc::transport::tamper::{Mutation, TamperRule};
use hetmpc::transport::{MsgKind, ALL_KINDS};
use hetmpc::{small_ring, Ring, Width};

use PartyId::*;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn chain_inputs() -> Inputs {
    Inputs::from([("a".to_string(), 3), ("b".to_string(), 5)])
}

fn meters(r: &RunReport) -> MulMeter {
    let mut m = MulMeter::default();
    for x in r.meters.values() {
        m.merge(x);
    }
    m
}

fn all_directions(parties: &[PartyId]) -> Vec<(PartyId, PartyId)> {
    let mut v = Vec::new();
    for &a in parties {
        for &b in parties {
            if a != b {
                v.push((a, b));
            }
        }
    }
    v
}

/// Mul-gate elements per directed channel, both phases, with every
/// direction among `parties` present.
fn traffic(r: &RunReport, parties: &[PartyId]) -> BTreeMap<(PartyId, PartyId), (u64, u64)> {
    let t = r.metrics.mul_traffic();
    all_directions(parties).into_iter().map(|ch| (ch, t.get(ch.0, ch.1))).collect()
}

fn criterion_1() -> Check {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0xacc1);
    let per_cell = 200;
    let mut runs = 0;
    for width in [Width::W1, Width::W64] {
        for (label, proto, homogenize) in [
            ("3pc", Proto::Three, Homogenize::Off),
            ("4pc", Proto::Four, Homogenize::Off),
            ("4pc rotate", Proto::Four, Homogenize::Rotate),
            ("3pc perm", Proto::Three, Homogenize::Perm),
        ] {
            for i in 0..per_cell {
                let gates = rng.gen_range(20..=1000);
                let depth = rng.gen_range(1..=30);
                let owners: &[PartyId] = match proto {
                    Proto::Three => &[P1, P2, P3, Outsider],
                    Proto::Four => &COMPUTE_PARTIES,
                };
                let c = random_circuit(&mut rng, &RandomSpec::new(width, gates, depth, owners));
                ensure(c.gates().len() <= 1000 && c.depth() <= 30, || format!("generator out of bounds ({label})"))?;
                let x = random_inputs(&mut rng, &c);
                let want = evaluate_cleartext(&c, &x).map_err(|e| e.to_string())?;
                let opts = RunOptions { homogenize, seed: hetmpc::runner::seed_from(i as u64), ..RunOptions::default() };
                let r = match proto {
                    Proto::Three => run3(&c, &x, &opts),
                    Proto::Four => run4(&c, &x, &opts),
                }
                .map_err(|e| format!("{label} k={width}: {e}"))?;
                ensure(r.honest_output(None).as_ref() == Some(&want), || format!("{label} k={width} circuit {i}: output differs"))?;
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs equal cleartext evaluation"))
}

fn criterion_2() -> Check {
    let g = 24;
    let r = run3(&mul_chain(Width::W64, g, [P1, P2]), &chain_inputs(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let g = g as u64;
    for (ch, (off, on)) in traffic(&r, &EVALUATORS) {
        let want = match ch {
            (P1, P3) => (g, 0),
            (P2, P3) | (P3, P2) => (0, g),
            _ => (0, 0),
        };
        ensure((off, on) == want, || format!("{}->{}: {off}/{on} elements over {g} gates", ch.0, ch.1))?;
    }
    let m = meters(&r);
    ensure(m == MulMeter { offline: 2 * g, online: 3 * g }, || format!("multiplications {m:?} over {g} gates"))?;
    Ok("1 offline element on P1->P3, 2 online on P2<->P3, 2+3 multiplications per gate".into())
}

fn criterion_3() -> Check {
    let g = 24;
    let r = run4(&mul_chain(Width::W64, g, [P1, P2]), &chain_inputs(), &RunOptions::default()).map_err(|e| e.to_string())?;
    let g = g as u64;
    let mut unused = 0;
    for (ch, (off, on)) in traffic(&r, &COMPUTE_PARTIES) {
        let want = match ch {
            (P1, P3) | (P4, P1) => (g, 0),
            (P2, P3) | (P3, P2) | (P3, P1) => (0, g),
            _ => (0, 0),
        };
        ensure((off, on) == want, || format!("{}->{}: {off}/{on} elements over {g} gates", ch.0, ch.1))?;
        unused += u32::from(want == (0, 0));
    }
    ensure(unused == 7, || format!("{unused} unused directions"))?;
    let by_kind = |k| r.metrics.elements(|c| c.kind == k);
    for k in [MsgKind::M2, MsgKind::M3, MsgKind::M3Prime, MsgKind::O1, MsgKind::O4] {
        ensure(by_kind(k) == g, || format!("{k:?}: {} elements", by_kind(k)))?;
    }
    Ok("2 offline + 3 online elements per gate, 7 directions idle".into())
}

fn criterion_4() -> Check {
    let depth = 17;
    let opts = RunOptions { checkpoint_interval: 5, ..RunOptions::default() };
    let c = mul_grid(Width::W32, 3, depth, [P1, P2]);
    let x = chain_inputs();
    let is_mul = |p: Phase| move |k: &hetmpc::transport::ChannelKey| k.kind.is_mul() && k.phase == p;
    let r3 = run3(&c, &x, &opts).map_err(|e| e.to_string())?;
    let r4 = run4(&c, &x, &opts).map_err(|e| e.to_string())?;
    let d = depth as u64;
    for (label, r) in [("3pc", &r3), ("4pc", &r4)] {
        for (a, b) in r.metrics.mul_traffic().active(Phase::Offline) {
            let n = r.metrics.rounds(a, b, is_mul(Phase::Offline));
            ensure(n == 1, || format!("{label} offline {a}->{b}: {n} rounds"))?;
        }
        for (a, b) in [(P2, P3), (P3, P2)] {
            let n = r.metrics.rounds(a, b, is_mul(Phase::Online));
            ensure(n == d, || format!("{label} online {a}->{b}: {n} rounds for depth {d}"))?;
        }
    }
    // Layer 0, every fifth layer and the last one.
    let checkpoints = (0..depth).filter(|l| *l == 0 || l % 5 == 0 || *l == depth - 1).count() as u64;
    let n = r4.metrics.rounds(P3, P1, is_mul(Phase::Online));
    ensure(n <= checkpoints, || format!("P3->P1: {n} rounds, {checkpoints} checkpoints"))?;
    Ok(format!("offline 1 round per channel, {d} online rounds for depth {d}, P3->P1 {n} <= {checkpoints} checkpoints"))
}

fn criterion_5() -> Check {
    let c = mul_grid(Width::W64, 60, 10, [P1, P2]);
    let g = c.muls().len() as u64;
    ensure(g == 600, || format!("{g} multiplications"))?;
    let x = chain_inputs();
    let perm = RunOptions { homogenize: Homogenize::Perm, ..RunOptions::default() };
    // Per directed channel per gate per instance: num / den, compared exactly.
    let uniform = |r: &RunReport, parties: &[PartyId], num: u64, den: u64| -> Result<(), String> {
        let n = r.instances as u64;
        for (ch, (off, on)) in traffic(r, parties) {
            ensure((off + on) * den == num * g * n, || format!("{}->{}: {} over {g} gates x {n} instances", ch.0, ch.1, off + on))?;
        }
        Ok(())
    };
    let r = run3(&c, &x, &perm).map_err(|e| e.to_string())?;
    ensure(r.instances == 6, || format!("{} instances", r.instances))?;
    uniform(&r, &EVALUATORS, 1, 2)?;
    let r = run4(&c, &x, &perm).map_err(|e| e.to_string())?;
    ensure(r.instances == 24, || format!("{} instances", r.instances))?;
    uniform(&r, &COMPUTE_PARTIES, 5, 12)?;
    let r = run4(&c, &x, &RunOptions { homogenize: Homogenize::Rotate, ..RunOptions::default() }).map_err(|e| e.to_string())?;
    for (ch, (off, on)) in traffic(&r, &COMPUTE_PARTIES) {
        let want = match ch {
            (P4, _) => (g / 3, 0),
            (_, P4) => (0, 0),
            _ => (g / 6, g / 2),
        };
        ensure((off, on) == want, || format!("rotation {}->{}: {off}/{on} over {g} gates", ch.0, ch.1))?;
    }
    Ok("perm3 1/2, perm4 5/12, rotation 1/6+1/2 on evaluator channels and 1/3 from P4".into())
}

fn criterion_6() -> Check {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0xacc6);
    let c = loop {
        let c = random_circuit(&mut rng, &RandomSpec::new(Width::W64, 150, 8, &COMPUTE_PARTIES));
        if c.muls().len() >= 20 {
            break c;
        }
    };
    let x = random_inputs(&mut rng, &c);
    let want = evaluate_cleartext(&c, &x).map_err(|e| e.to_string())?;
    let senders = [(MsgKind::O1, P1), (MsgKind::O4, P4), (MsgKind::M2, P2), (MsgKind::M3, P3), (MsgKind::M3Prime, P3)];
    let mut detected = 0;
    for (kind, culprit) in senders {
        for gate in 0..20 {
            let rule = TamperRule::new(kind, Some(gate), Mutation::AddDelta(1));
            let opts = RunOptions { corrupt: Some((culprit, vec![rule])), ..RunOptions::default() };
            let r = run4(&c, &x, &opts).map_err(|e| e.to_string())?;
            ensure(r.tampered == 1, || format!("{kind:?} gate {gate}: rule hit {} frames", r.tampered))?;
            let released: Vec<PartyId> = r.outputs.iter().filter(|(_, o)| o.is_ok()).map(|(p, _)| *p).collect();
            ensure(released.is_empty(), || format!("{kind:?} gate {gate} by {culprit}: outputs released to {released:?}"))?;
            detected += 1;
        }
    }
    let mut false_aborts = 0;
    for i in 0..100u64 {
        let opts = RunOptions { seed: hetmpc::runner::seed_from(1000 + i), ..RunOptions::default() };
        let r = run4(&c, &x, &opts).map_err(|e| e.to_string())?;
        if r.honest_output(None).as_ref() != Some(&want) {
            false_aborts += 1;
        }
    }
    ensure(false_aborts == 0, || format!("{false_aborts} false aborts in 100 honest runs"))?;
    Ok(format!("{detected}/100 tampers aborted before release, 0/100 false aborts"))
}

fn criterion_7() -> Check {
    let mut rng = rand::rngs::StdRng::seed_from_u64(0xacc7);
    let c = random_circuit(&mut rng, &RandomSpec::new(Width::W16, 80, 6, &COMPUTE_PARTIES));
    let x = random_inputs(&mut rng, &c);
    let want = evaluate_cleartext(&c, &x).map_err(|e| e.to_string())?;
    let opts = RunOptions { fair: true, timeout: Duration::from_millis(300), ..RunOptions::default() };
    let forge = |valid| Mutation::ForgeAbort { valid };
    let mut runs = 0;
    for p in COMPUTE_PARTIES {
        for target in COMPUTE_PARTIES.into_iter().filter(|q| *q != p) {
            let cases: Vec<(&str, Vec<TamperRule>, Option<bool>)> = vec![
                ("honest", vec![], Some(true)),
                ("unauthenticated abort", vec![TamperRule::new(MsgKind::Verdict, None, forge(false)).to(target).frame_id(FAIR_ROUND_A)], Some(true)),
                ("authenticated abort", vec![TamperRule::new(MsgKind::Verdict, None, forge(true)).to(target).frame_id(FAIR_ROUND_A)], None),
                ("unsolicited relay", vec![TamperRule::new(MsgKind::Verdict, None, forge(true)).to(target).frame_id(FAIR_ROUND_B)], None),
                ("commitment to one", vec![TamperRule::new(MsgKind::HashCommit, None, Mutation::AddDelta(1)).to(target).frame_id(FAIR_COMMIT_ID)], None),
                ("all commitments", vec![TamperRule::new(MsgKind::HashCommit, None, Mutation::AddDelta(1)).frame_id(FAIR_COMMIT_ID)], None),
                ("silent release", vec![TamperRule::new(MsgKind::Reveal, None, Mutation::Drop)], None),
                ("wrong release", vec![TamperRule::new(MsgKind::Reveal, None, Mutation::AddDelta(1))], None),
                ("silent to one", vec![TamperRule::silence().to(target)], None),
            ];
            for (name, rules, must_output) in cases {
                let r = run_scenario(&c, &x, Proto::Four, p, rules, &opts).map_err(|e| e.to_string())?;
                match &r.outcome {
                    Outcome::Output { values } => ensure(values == &want, || format!("{p} {name}: wrong output"))?,
                    Outcome::Abort { .. } => ensure(must_output != Some(true), || format!("{p} {name} to {target}: aborted"))?,
                    o => return Err(format!("{p} {name} to {target}: {o:?}")),
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} scenarios unanimous, unauthenticated aborts end in output"))
}

fn criterion_8() -> Check {
    let c = mul_chain(Width::W32, 25, [P1, P4]);
    let x = chain_inputs();
    let want = evaluate_cleartext(&c, &x).map_err(|e| e.to_string())?;
    let rules: Vec<TamperRule> = ALL_KINDS
        .into_iter()
        .filter(|k| *k != MsgKind::Share && !k.is_overhead())
        .map(|k| TamperRule::new(k, None, Mutation::AddDelta(1)))
        .collect();
    let mut resets = Vec::new();
    for p in COMPUTE_PARTIES {
        for interval in [4, 10] {
            let opts = RunOptions { god: true, checkpoint_interval: interval, ..RunOptions::default() };
            let r = run_scenario(&c, &x, Proto::Four, p, rules.clone(), &opts).map_err(|e| e.to_string())?;
            match r.outcome {
                Outcome::GodOutput { values, resets: n, excluded } => {
                    ensure(values == want && n <= 4 && excluded == vec![p], || format!("{p}: {n} resets, excluded {excluded:?}"))?;
                    resets.push(format!("{p}:{n}"));
                }
                o => return Err(format!("{p}: {o:?}")),
            }
        }
    }
    resets.dedup();
    Ok(format!("oracle output for every culprit, resets {}", resets.join(" ")))
}

fn criterion_9() -> Check {
    let mut got = Vec::new();
    for owner in [P1, P2, P3, Outsider] {
        let c = parse_circuit(&format!("ring 64; in v {owner}; cmul w v 1; out w ALL")).map_err(|e| e.to_string())?;
        let x = Inputs::from([("v".to_string(), 41)]);
        let r = run3(&c, &x, &RunOptions::default()).map_err(|e| e.to_string())?;
        ensure(r.honest_output(None).and_then(|o| o.values().next().copied()) == Some(41), || format!("dealer {owner}: wrong output"))?;
        got.push(r.metrics.elements(|k| k.kind == MsgKind::Share));
    }
    ensure(got == [1, 1, 1, 2], || format!("elements per dealer P1/P2/P3/O: {got:?}"))?;
    Ok("dealer P1/P2/P3/O send 1/1/1/2 elements".into())
}

small_ring!(Z8, 3);

fn z(v: i64) -> Z8 {
    Z8::from_u64(v.rem_euclid(8) as u64)
}

fn criterion_10() -> Check {
    use hetmpc::{proto3, proto4};
    let md = |v: i64| v.rem_euclid(8);
    let (a, b) = (3, 5);
    let (x2, x3, y2, y3) = (2, 6, 1, 4);
    let (x1, y1) = (md(x2 - x3), md(y2 - y3));
    ensure((x1, y1) == (4, 5), || format!("x1, y1 = {x1}, {y1}"))?;
    let (a3, b3, a2, b2) = (md(a + x3), md(b + y3), md(a + x2), md(b + y2));
    ensure((a3, b3, a2, b2) == (1, 1, 5, 6), || "masked values".into())?;

    // Three parties: m1 is the unique value for which both shares open to
    // a*b for every input pair under these masks.
    let (r12, z2, z3) = (7, 3, 5);
    let m1s: Vec<i64> = (0..8)
        .filter(|&m1| {
            (0..8).all(|a| {
                (0..8).all(|b| {
                    let t2 = (a + x3) * y2 + (b + y3) * x2 + r12;
                    let t3 = (a + x2) * (b + y2) + m1;
                    let (m2, m3) = (t2 - z2, t3 + z3);
                    md(m3 - t2 - z3) == md(a * b) && md(t3 - m2 - z2) == md(a * b)
                })
            })
        })
        .collect();
    ensure(m1s == [3], || format!("m1 candidates {m1s:?}"))?;
    let m1 = 3;
    let t2 = md(a3 * y2 + b3 * x2 + r12);
    let t3 = md(a2 * b2 + m1);
    let (m2, m3) = (md(t2 - z2), md(t3 + z3));
    let (c3, c2) = (md(m3 - t2), md(t3 - m2));
    ensure([t2, m2, t3, m3, c3, c2] == [2, 7, 1, 6, 4, 2], || "three-party fixture".into())?;
    ensure(md(c3 - z3) == 7 && md(c2 - z2) == 7, || "three-party shares".into())?;

    let mut mm = MulMeter::default();
    let pm1 = proto3::algebra::m1(&mut mm, z(x2), z(x3), z(y2), z(y3), z(r12));
    let pt2 = proto3::algebra::t2(&mut mm, z(a3), z(b3), z(x2), z(y2), z(r12));
    let pt3 = proto3::algebra::t3(&mut mm, z(a2), z(b2), pm1);
    let (pm2, pm3) = (proto3::algebra::m2(pt2, z(z2)), proto3::algebra::m3(pt3, z(z3)));
    let got = [pm1, pt2, pm2, pt3, pm3, proto3::algebra::c3(pm3, pt2), proto3::algebra::c2(pt3, pm2)];
    ensure(got == [m1, t2, m2, t3, m3, c3, c2].map(z), || format!("three-party implementation gives {got:?}"))?;

    // Four parties: o1 and o4 are the unique corrections that make role 3's
    // and role 1's shares open correctly for every input pair.
    let (r124, r234, z1) = (7, 3, md(z2 - z3));
    ensure(z1 == 6, || "z1".into())?;
    let o1s: Vec<i64> = (0..8)
        .filter(|&o1| {
            (0..8).all(|a| {
                (0..8).all(|b| {
                    let m2 = (a + x3) * (b + y3) + x2 * y2 + r124 + z2;
                    md(m2 - (a + x2) * y3 - (b + y2) * x3 + o1 - z2) == md(a * b)
                })
            })
        })
        .collect();
    ensure(o1s == [5], || format!("o1 candidates {o1s:?}"))?;
    let o1 = 5;
    let o4s: Vec<i64> = (0..8)
        .filter(|&o4| {
            (0..8).all(|a| {
                (0..8).all(|b| {
                    let m3p = (a + x2 - x3) * (b + y2 - y3) + r234 + z3;
                    md(m3p - (a + x3) * y1 - (b + y3) * x1 + o4 - 2 * x1 * y1 - z3) == md(a * b)
                })
            })
        })
        .collect();
    ensure(o4s == [7], || format!("o4 candidates {o4s:?}"))?;
    let o4 = 7;
    let m2 = md(a3 * b3 + x2 * y2 + r124 + z2);
    let m3 = md(a2 * b2 + o1 + x3 * y3 + z3);
    let m3p = md((a2 - x3) * (b2 - y3) + r234 + z3);
    ensure([m2, m3, m3p] == [5, 0, 6], || format!("m2, m3, m3' = {m2}, {m3}, {m3p}"))?;
    let c3_2 = md(m3 - a3 * y2 - b3 * x2 + r124);
    let c2_3 = md(m2 - a2 * y3 - b2 * x3 + o1);
    let c3_1 = md(m3p - a3 * y1 - b3 * x1 + o4 - 2 * x1 * y1);
    ensure([c3_2, c2_3, c3_1] == [4, 2, 4], || "four-party shares".into())?;
    ensure(md(c3_2 - z3) == 7 && md(c2_3 - z2) == 7, || "four-party openings".into())?;
    let v2 = md(m2 - m3 - r234);
    let v1 = md(a3 * b3 - a2 * b2 + o4 + x1 * y1 + z1 + 2 * r124);
    ensure(v2 == 2 && v1 == 2, || format!("checks {v2} {v1}"))?;

    use proto4::algebra as q;
    let mut mm = MulMeter::default();
    let po1 = q::o1(&mut mm, z(x1), z(y1), z(r124));
    let po4 = q::o4(&mut mm, z(x2), z(y2), z(x3), z(y3), z(r234));
    let pm2 = q::m2(&mut mm, z(a3), z(b3), z(x2), z(y2), z(r124), z(z2));
    let pm3 = q::m3(&mut mm, z(a2), z(b2), po1, z(x3), z(y3), z(z3));
    let pm3p = q::m3p(&mut mm, z(a2), z(b2), z(x3), z(y3), z(r234), z(z3));
    let got = [
        po1,
        po4,
        pm2,
        pm3,
        pm3p,
        q::c3_role2(&mut mm, pm3, z(a3), z(b3), z(x2), z(y2), z(r124)),
        q::c2_role3(&mut mm, pm2, z(a2), z(b2), z(x3), z(y3), po1),
        q::c3_role1(&mut mm, pm3p, z(a3), z(b3), z(x1), z(y1), po4),
        q::v23(pm2, pm3, z(r234)),
        q::v1(&mut mm, z(a3), z(b3), z(x1), z(y1), po4, z(z1), z(r124)),
    ];
    ensure(got == [o1, o4, m2, m3, m3p, c3_2, c2_3, c3_1, v2, v1].map(z), || format!("four-party implementation gives {got:?}"))?;
    Ok("Z_8 fixtures confirmed by search, then matched by both protocols".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("oracle equivalence", criterion_1),
        ("three-party per-gate costs", criterion_2),
        ("four-party per-gate costs", criterion_3),
        ("round profile", criterion_4),
        ("homogenization fractions", criterion_5),
        ("malicious detection", criterion_6),
        ("fairness", criterion_7),
        ("guaranteed output delivery", criterion_8),
        ("sharing costs", criterion_9),
        ("numeric fixtures", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = f();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(m) => println!("criterion {:>2} {name}: PASS ({m}; {secs:.1}s)", i + 1),
            Err(m) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({m}; {secs:.1}s)", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
