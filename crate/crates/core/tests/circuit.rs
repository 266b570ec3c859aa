use std::collections::HashMap;

use hetmpc::circuit::random::{random_circuit, random_inputs, RandomSpec};
use hetmpc::circuit::{evaluate_cleartext, parse_bristol, parse_circuit, Circuit, Gate, GateKind, Inputs};
use hetmpc::{PartyId, RingElement, Width};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const ADDER8: &str = include_str!("../corpus/adder8.circ");
const ADDER64: &str = include_str!("../corpus/adder64.txt");

/// Depth of a text-format circuit computed straight from the source lines.
fn reference_depth(text: &str) -> (usize, usize) {
    let mut deps: HashMap<String, (bool, Vec<String>)> = HashMap::new();
    let mut count = 0;
    let mut outs = Vec::new();
    for line in text.lines() {
        let t: Vec<&str> = line.split('#').next().unwrap().split_whitespace().collect();
        if t.is_empty() || t[0] == "ring" {
            continue;
        }
        count += 1;
        match t[0] {
            "in" => {
                deps.insert(t[1].into(), (false, vec![]));
            }
            "add" | "mul" => {
                deps.insert(t[1].into(), (t[0] == "mul", vec![t[2].into(), t[3].into()]));
            }
            "cadd" | "cmul" => {
                deps.insert(t[1].into(), (false, vec![t[2].into()]));
            }
            "out" => outs.push(t[1].to_string()),
            _ => panic!("unexpected line {line}"),
        }
    }
    fn depth(w: &str, deps: &HashMap<String, (bool, Vec<String>)>, memo: &mut HashMap<String, usize>) -> usize {
        if let Some(&d) = memo.get(w) {
            return d;
        }
        let (is_mul, srcs) = &deps[w];
        let d = srcs.iter().map(|s| depth(s, deps, memo)).max().unwrap_or(0) + usize::from(*is_mul);
        memo.insert(w.to_string(), d);
        d
    }
    let mut memo = HashMap::new();
    let all: Vec<String> = deps.keys().cloned().collect();
    let d = all.iter().map(|w| depth(w, &deps, &mut memo)).max().unwrap_or(0);
    (count, d)
}

#[test]
fn adder_corpus_gate_count_and_depth() {
    let c = parse_circuit(ADDER8).unwrap();
    let (count, depth) = reference_depth(ADDER8);
    assert_eq!(count, 64);
    assert_eq!(c.len(), 64);
    assert_eq!(c.depth(), depth);
}

#[test]
fn adder_corpus_adds() {
    let c = parse_circuit(ADDER8).unwrap();
    let mut rng = StdRng::seed_from_u64(8);
    for _ in 0..50 {
        let (x, y): (u8, u8) = (rng.gen(), rng.gen());
        let mut inputs = Inputs::new();
        for i in 0..8 {
            inputs.insert(format!("a{i}"), u64::from(x >> i & 1));
            inputs.insert(format!("b{i}"), u64::from(y >> i & 1));
        }
        let out = evaluate_cleartext(&c, &inputs).unwrap();
        let bits: Vec<u64> = out.values().copied().collect();
        let sum = (0..8).fold(0u16, |acc, i| acc | (bits[i] as u16) << i) | (bits[8] as u16) << 8;
        assert_eq!(sum, u16::from(x) + u16::from(y));
        let overflow = (x as i8).checked_add(y as i8).is_none();
        assert_eq!(bits[9] == 1, overflow);
    }
}

#[test]
fn bristol_adder_matches_integer_addition() {
    let c = parse_bristol(ADDER64).unwrap();
    assert_eq!(c.width(), Width::W1);
    let mut rng = StdRng::seed_from_u64(64);
    for _ in 0..100 {
        let (x, y): (u64, u64) = (rng.gen(), rng.gen());
        let mut inputs = Inputs::new();
        for i in 0..64 {
            inputs.insert(format!("in0_{i}"), x >> i & 1);
            inputs.insert(format!("in1_{i}"), y >> i & 1);
        }
        let out = evaluate_cleartext(&c, &inputs).unwrap();
        let z = out.values().enumerate().fold(0u64, |acc, (i, &b)| acc | b << i);
        assert_eq!(z, x.wrapping_add(y));
    }
}

/// Second interpreter: demand-driven recursion over dynamic ring elements.
fn interpret(c: &Circuit, inputs: &Inputs) -> Vec<u64> {
    fn value(c: &Circuit, id: u32, inputs: &Inputs, memo: &mut HashMap<u32, RingElement>) -> RingElement {
        if let Some(v) = memo.get(&id) {
            return *v;
        }
        let w = c.width();
        let v = match c.gate(id).kind {
            GateKind::Input { .. } => RingElement::new(inputs[&c.wire_name(id)], w),
            GateKind::Add(a, b) => value(c, a, inputs, memo).add(value(c, b, inputs, memo)).unwrap(),
            GateKind::Mul(a, b) => value(c, a, inputs, memo).mul(value(c, b, inputs, memo)).unwrap(),
            GateKind::ConstAdd(a, k) => value(c, a, inputs, memo).add(RingElement::new(k, w)).unwrap(),
            GateKind::ConstMul(a, k) => value(c, a, inputs, memo).mul(RingElement::new(k, w)).unwrap(),
            GateKind::Output { src, .. } => value(c, src, inputs, memo),
        };
        memo.insert(id, v);
        v
    }
    let mut memo = HashMap::new();
    c.outputs().map(|g| value(c, g.id, inputs, &mut memo).value()).collect()
}

#[test]
fn random_circuit_matches_second_interpreter() {
    let mut rng = StdRng::seed_from_u64(500);
    for width in [Width::W1, Width::W8, Width::W32, Width::W64] {
        let spec = RandomSpec::new(width, 500, 30, &[PartyId::P1, PartyId::P2, PartyId::P3]);
        let c = random_circuit(&mut rng, &spec);
        for _ in 0..5 {
            let inputs = random_inputs(&mut rng, &c);
            let fast: Vec<u64> = evaluate_cleartext(&c, &inputs).unwrap().into_values().collect();
            assert_eq!(fast, interpret(&c, &inputs));
        }
    }
}

proptest! {
    #[test]
    fn layering_invariants(seed: u64, n in 20usize..120, depth in 1usize..12) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = RandomSpec::new(Width::W16, n, depth, &[PartyId::P1, PartyId::P4]);
        let c = random_circuit(&mut rng, &spec);
        let mut layer_of = vec![usize::MAX; c.len()];
        for (li, layer) in c.layers().iter().enumerate() {
            for &g in layer.muls.iter().chain(&layer.linear) {
                layer_of[g as usize] = li;
            }
        }
        prop_assert!(layer_of.iter().all(|&l| l != usize::MAX));
        for g in c.gates() {
            for src in g.kind.inputs() {
                prop_assert!(src < g.id);
                match g.kind {
                    GateKind::Mul(..) => prop_assert!(layer_of[src as usize] < layer_of[g.id as usize]),
                    _ => prop_assert!(layer_of[src as usize] <= layer_of[g.id as usize]),
                }
            }
        }
        for layer in c.layers() {
            prop_assert!(layer.muls.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(layer.linear.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert_eq!(c.depth(), c.layers().iter().filter(|l| !l.muls.is_empty()).count());
        prop_assert!(c.depth() <= depth);
    }

    #[test]
    fn layering_ignores_input_order(seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let spec = RandomSpec::new(Width::W8, 60, 6, &[PartyId::P2]);
        let c = random_circuit(&mut rng, &spec);
        let mut shuffled: Vec<Gate> = c.gates().to_vec();
        shuffled.reverse();
        let again = Circuit::new(c.width(), shuffled).unwrap();
        prop_assert_eq!(again, c);
    }
}
