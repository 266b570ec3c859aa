//! Seeded random circuits and input assignments.

use rand::Rng;

use super::{Circuit, Gate, GateId, GateKind, Inputs, Recipients};
use crate::party::PartyId;
use crate::ring::Width;

#[derive(Debug, Clone)]
pub struct RandomSpec {
    pub width: Width,
    /// Total number of gates, inputs and outputs included.
    pub gates: usize,
    pub inputs: usize,
    pub outputs: usize,
    /// Upper bound on the multiplicative depth.
    pub max_depth: usize,
    /// Parties that may own inputs.
    pub owners: Vec<PartyId>,
    /// Fraction of the internal gates that are multiplications.
    pub mul_fraction: f64,
}

impl RandomSpec {
    pub fn new(width: Width, gates: usize, max_depth: usize, owners: &[PartyId]) -> RandomSpec {
        RandomSpec {
            width,
            gates,
            inputs: (gates / 10).clamp(2, 16),
            outputs: (gates / 20).clamp(1, 8),
            max_depth,
            owners: owners.to_vec(),
            mul_fraction: 0.5,
        }
    }
}

pub fn random_circuit<G: Rng + ?Sized>(rng: &mut G, spec: &RandomSpec) -> Circuit {
    assert!(spec.gates > spec.inputs + spec.outputs, "not enough gates for inputs and outputs");
    assert!(!spec.owners.is_empty());
    let mut gates = Vec::with_capacity(spec.gates);
    let mut level = Vec::with_capacity(spec.gates);
    for i in 0..spec.inputs {
        let owner = spec.owners[rng.gen_range(0..spec.owners.len())];
        gates.push(Gate { id: i as GateId, kind: GateKind::Input { owner }, name: Some(format!("x{i}")) });
        level.push(0usize);
    }
    let internal = spec.gates - spec.inputs - spec.outputs;
    for _ in 0..internal {
        let id = gates.len() as GateId;
        let n = gates.len();
        // Prefer recent wires so depth actually builds up.
        let pick = |rng: &mut G| -> GateId {
            let lo = n.saturating_sub(12);
            if rng.gen_bool(0.7) { rng.gen_range(lo..n) as GateId } else { rng.gen_range(0..n) as GateId }
        };
        let a = pick(rng);
        let b = pick(rng);
        let base = level[a as usize].max(level[b as usize]);
        let want_mul = rng.gen_bool(spec.mul_fraction);
        let (kind, lv) = if want_mul && base < spec.max_depth {
            (GateKind::Mul(a, b), base + 1)
        } else {
            match rng.gen_range(0..4) {
                0 => (GateKind::ConstAdd(a, rng.gen::<u64>() & spec.width.mask()), level[a as usize]),
                1 => (GateKind::ConstMul(a, rng.gen::<u64>() & spec.width.mask()), level[a as usize]),
                _ => (GateKind::Add(a, b), base),
            }
        };
        gates.push(Gate { id, kind, name: None });
        level.push(lv);
    }
    let last_internal = gates.len();
    for o in 0..spec.outputs {
        let id = gates.len() as GateId;
        // The deepest gate is always observable.
        let src = if o == 0 {
            (0..last_internal).max_by_key(|&i| (level[i], i)).unwrap() as GateId
        } else {
            rng.gen_range(spec.inputs..last_internal) as GateId
        };
        gates.push(Gate {
            id,
            kind: GateKind::Output { src, recipients: Recipients::ALL },
            name: Some(format!("y{o}")),
        });
    }
    Circuit::new(spec.width, gates).expect("generated gates form a DAG")
}

pub fn random_inputs<G: Rng + ?Sized>(rng: &mut G, circuit: &Circuit) -> Inputs {
    circuit.inputs().map(|g| (circuit.wire_name(g.id), rng.gen::<u64>() & circuit.width().mask())).collect()
}

/// Fills every input missing from `given` from a generator seeded with `seed`.
pub fn seeded_inputs(circuit: &Circuit, given: &Inputs, seed: u64) -> Inputs {
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut x = random_inputs(&mut rng, circuit);
    for (k, v) in given {
        x.insert(k.clone(), *v);
    }
    x
}

/// A chain of `depth` dependent multiplications over two inputs.
pub fn mul_chain(width: Width, depth: usize, owners: [PartyId; 2]) -> Circuit {
    let mut gates = vec![
        Gate { id: 0, kind: GateKind::Input { owner: owners[0] }, name: Some("a".into()) },
        Gate { id: 1, kind: GateKind::Input { owner: owners[1] }, name: Some("b".into()) },
    ];
    let mut acc = 0;
    for _ in 0..depth {
        let id = gates.len() as GateId;
        gates.push(Gate { id, kind: GateKind::Mul(acc, 1), name: None });
        acc = id;
    }
    let id = gates.len() as GateId;
    gates.push(Gate { id, kind: GateKind::Output { src: acc, recipients: Recipients::ALL }, name: Some("y".into()) });
    Circuit::new(width, gates).expect("chain is a DAG")
}

/// `chains` independent multiplication chains of length `depth`, each
/// starting from `a * b`, with one output per chain.
pub fn mul_grid(width: Width, chains: usize, depth: usize, owners: [PartyId; 2]) -> Circuit {
    let mut gates = vec![
        Gate { id: 0, kind: GateKind::Input { owner: owners[0] }, name: Some("a".into()) },
        Gate { id: 1, kind: GateKind::Input { owner: owners[1] }, name: Some("b".into()) },
    ];
    let push = |gates: &mut Vec<Gate>, kind| {
        let id = gates.len() as GateId;
        gates.push(Gate { id, kind, name: None });
        id
    };
    for i in 0..chains {
        let mut acc = push(&mut gates, GateKind::ConstAdd(0, i as u64 & width.mask()));
        for _ in 0..depth {
            acc = push(&mut gates, GateKind::Mul(acc, 1));
        }
        push(&mut gates, GateKind::Output { src: acc, recipients: Recipients::ALL });
    }
    Circuit::new(width, gates).expect("chains form a DAG")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn respects_bounds() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let spec = RandomSpec::new(Width::W32, 500, 30, &[PartyId::P1, PartyId::P2, PartyId::P3]);
        let c = random_circuit(&mut rng, &spec);
        assert_eq!(c.len(), 500);
        assert!(c.depth() <= 30);
        assert!(c.depth() >= 5);
        assert_eq!(c.outputs().count(), spec.outputs);
    }

    #[test]
    fn grid_shape() {
        let c = mul_grid(Width::W16, 60, 10, [PartyId::P1, PartyId::P2]);
        assert_eq!((c.depth(), c.muls().len(), c.outputs().count()), (10, 600, 60));
    }

    #[test]
    fn chain_depth() {
        let c = mul_chain(Width::W8, 7, [PartyId::P1, PartyId::P2]);
        assert_eq!(c.depth(), 7);
        assert_eq!(c.muls().len(), 7);
    }
}
