use std::collections::BTreeMap;

use super::{Circuit, CircuitError, GateId, GateKind};
use crate::ring::{Bit, Ring, Width, Zk};

/// Input values keyed by input wire name.
pub type Inputs = BTreeMap<String, u64>;
/// Output values keyed by the id of the output gate.
pub type Outputs = BTreeMap<GateId, u64>;

/// Input value for each input gate, reduced mod `2^k`.
pub(crate) fn input_values(circuit: &Circuit, inputs: &Inputs) -> Result<BTreeMap<GateId, u64>, CircuitError> {
    circuit
        .inputs()
        .map(|g| {
            let name = circuit.wire_name(g.id);
            inputs
                .get(&name)
                .map(|v| (g.id, v & circuit.width().mask()))
                .ok_or(CircuitError::MissingInput(name))
        })
        .collect()
}

/// Evaluates over an explicit ring type, ignoring the circuit's declared width.
pub fn evaluate_as<R: Ring>(circuit: &Circuit, inputs: &Inputs) -> Result<Outputs, CircuitError> {
    let given = input_values(circuit, inputs)?;
    let mut val = vec![R::zero(); circuit.len()];
    let mut out = Outputs::new();
    for layer in circuit.layers() {
        for &id in layer.muls.iter().chain(&layer.linear) {
            let v = match circuit.gate(id).kind {
                GateKind::Input { .. } => R::from_u64(given[&id]),
                GateKind::Add(a, b) => val[a as usize] + val[b as usize],
                GateKind::Mul(a, b) => val[a as usize] * val[b as usize],
                GateKind::ConstAdd(a, c) => val[a as usize] + R::from_u64(c),
                GateKind::ConstMul(a, c) => val[a as usize] * R::from_u64(c),
                GateKind::Output { src, .. } => {
                    out.insert(id, val[src as usize].to_u64());
                    val[src as usize]
                }
            };
            val[id as usize] = v;
        }
    }
    Ok(out)
}

/// Evaluates the circuit in the clear, gate by gate mod `2^k`.
pub fn evaluate_cleartext(circuit: &Circuit, inputs: &Inputs) -> Result<Outputs, CircuitError> {
    match circuit.width() {
        Width::W1 => evaluate_as::<Bit>(circuit, inputs),
        Width::W8 => evaluate_as::<Zk<u8>>(circuit, inputs),
        Width::W16 => evaluate_as::<Zk<u16>>(circuit, inputs),
        Width::W32 => evaluate_as::<Zk<u32>>(circuit, inputs),
        Width::W64 => evaluate_as::<Zk<u64>>(circuit, inputs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{parse_bristol, parse_circuit};

    fn inputs(pairs: &[(&str, u64)]) -> Inputs {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn mul_in_z8() {
        crate::small_ring!(Z8, 3);
        let c = parse_circuit("ring 8\nin a P1\nin b P2\nmul c a b\nout c ALL").unwrap();
        let out = evaluate_as::<Z8>(&c, &inputs(&[("a", 3), ("b", 5)])).unwrap();
        assert_eq!(out[&3], 7);
        assert_eq!(evaluate_cleartext(&c, &inputs(&[("a", 3), ("b", 5)])).unwrap()[&3], 15);
    }

    #[test]
    fn const_mul_zero() {
        let c = parse_circuit("in a P1\ncmul b a 0\nout b ALL").unwrap();
        let out = evaluate_cleartext(&c, &inputs(&[("a", u64::MAX)])).unwrap();
        assert_eq!(out[&2], 0);
    }

    #[test]
    fn inv_negates() {
        let c = parse_bristol("1 2\n1 1\n1 1\n\n1 1 0 1 INV\n").unwrap();
        assert_eq!(evaluate_cleartext(&c, &inputs(&[("in0_0", 1)])).unwrap()[&2], 0);
        assert_eq!(evaluate_cleartext(&c, &inputs(&[("in0_0", 0)])).unwrap()[&2], 1);
    }

    #[test]
    fn missing_input() {
        let c = parse_circuit("in a P1\nin b P2\nadd c a b\nout c ALL").unwrap();
        assert_eq!(
            evaluate_cleartext(&c, &inputs(&[("a", 1)])),
            Err(CircuitError::MissingInput("b".into()))
        );
    }

    #[test]
    fn wraps_mod_2k() {
        let c = parse_circuit("ring 16\nin a P1\ncadd b a 1\nout b ALL").unwrap();
        assert_eq!(evaluate_cleartext(&c, &inputs(&[("a", 0xffff)])).unwrap()[&2], 0);
    }
}
