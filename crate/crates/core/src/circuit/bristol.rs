//! Reader for Bristol-fashion boolean circuits.
//!
//! Input value `i` is owned by evaluator `P{(i mod 3) + 1}`; every output wire
//! is revealed to all parties.

use std::collections::HashMap;

use super::{Circuit, CircuitError, Gate, GateId, GateKind, Recipients};
use crate::party::EVALUATORS;
use crate::ring::Width;

pub fn parse_bristol(text: &str) -> Result<Circuit, CircuitError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header = |what: &str| -> Result<(usize, Vec<usize>), CircuitError> {
        for (line, l) in lines.by_ref() {
            if l.trim().is_empty() {
                continue;
            }
            let nums = l
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CircuitError::Parse { line, msg: format!("malformed {what}") })?;
            return Ok((line, nums));
        }
        Err(CircuitError::Parse { line: 0, msg: format!("missing {what}") })
    };

    let (l1, counts) = header("gate/wire counts")?;
    if counts.len() != 2 {
        return Err(CircuitError::Parse { line: l1, msg: "expected `<gates> <wires>`".into() });
    }
    let (n_gates, n_wires) = (counts[0], counts[1]);
    let (l2, ins) = header("input description")?;
    if ins.is_empty() || ins.len() != ins[0] + 1 {
        return Err(CircuitError::Parse { line: l2, msg: "input value count does not match".into() });
    }
    let (l3, outs) = header("output description")?;
    if outs.is_empty() || outs.len() != outs[0] + 1 {
        return Err(CircuitError::Parse { line: l3, msg: "output value count does not match".into() });
    }

    let mut gates = Vec::new();
    let mut wire_gate: HashMap<usize, GateId> = HashMap::new();
    for (v, &bits) in ins[1..].iter().enumerate() {
        for b in 0..bits {
            let id = gates.len() as GateId;
            wire_gate.insert(id as usize, id);
            gates.push(Gate {
                id,
                kind: GateKind::Input { owner: EVALUATORS[v % 3] },
                name: Some(format!("in{v}_{b}")),
            });
        }
    }

    let mut seen_gates = 0;
    for (line, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let err = |msg: String| CircuitError::Parse { line, msg };
        let op = *toks.last().unwrap();
        let nums = toks[..toks.len() - 1]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err("malformed gate line".into()))?;
        if nums.len() < 2 || nums.len() != 2 + nums[0] + nums[1] {
            return Err(err("wire counts do not match the wire list".into()));
        }
        let (n_in, n_out) = (nums[0], nums[1]);
        let wire = |w: usize| -> Result<GateId, CircuitError> {
            wire_gate.get(&w).copied().ok_or(CircuitError::Dangling { line, wire: w.to_string() })
        };
        let expect = |i: usize, o: usize| -> Result<(), CircuitError> {
            if n_in == i && n_out == o {
                Ok(())
            } else {
                Err(CircuitError::Parse { line, msg: format!("{op} takes {i} input(s) and {o} output(s)") })
            }
        };
        let out_wire = nums[nums.len() - 1];
        let kind = match op {
            "XOR" => {
                expect(2, 1)?;
                Some(GateKind::Add(wire(nums[2])?, wire(nums[3])?))
            }
            "AND" => {
                expect(2, 1)?;
                Some(GateKind::Mul(wire(nums[2])?, wire(nums[3])?))
            }
            "INV" => {
                expect(1, 1)?;
                Some(GateKind::ConstAdd(wire(nums[2])?, 1))
            }
            "EQW" => {
                expect(1, 1)?;
                let src = wire(nums[2])?;
                wire_gate.insert(out_wire, src);
                None
            }
            other => return Err(CircuitError::UnknownKind { line, kind: other.to_string() }),
        };
        seen_gates += 1;
        if out_wire >= n_wires {
            return Err(err(format!("wire {out_wire} exceeds the declared {n_wires} wires")));
        }
        if let Some(kind) = kind {
            let id = gates.len() as GateId;
            if wire_gate.insert(out_wire, id).is_some() {
                return Err(err(format!("wire {out_wire} assigned twice")));
            }
            gates.push(Gate { id, kind, name: None });
        }
    }
    if seen_gates != n_gates {
        return Err(CircuitError::Parse {
            line: l1,
            msg: format!("header declares {n_gates} gates, found {seen_gates}"),
        });
    }

    let total_out: usize = outs[1..].iter().sum();
    let first_out = n_wires.checked_sub(total_out).ok_or(CircuitError::Parse {
        line: l3,
        msg: "more output wires than wires".into(),
    })?;
    let mut bit = 0;
    for (v, &bits) in outs[1..].iter().enumerate() {
        for b in 0..bits {
            let w = first_out + bit;
            bit += 1;
            let src = *wire_gate.get(&w).ok_or(CircuitError::Dangling { line: l3, wire: w.to_string() })?;
            let id = gates.len() as GateId;
            gates.push(Gate {
                id,
                kind: GateKind::Output { src, recipients: Recipients::ALL },
                name: Some(format!("out{v}_{b}")),
            });
        }
    }
    Circuit::new(Width::W1, gates)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and() {
        let c = parse_bristol("1 3\n2 1 1\n1 1\n\n2 1 0 1 2 AND\n").unwrap();
        assert_eq!(c.muls().len(), 1);
        assert_eq!(c.depth(), 1);
        assert_eq!(c.width(), Width::W1);
        assert_eq!(c.inputs().count(), 2);
    }

    #[test]
    fn inv_becomes_const_add() {
        let c = parse_bristol("1 2\n1 1\n1 1\n\n1 1 0 1 INV\n").unwrap();
        assert_eq!(c.gate(1).kind, GateKind::ConstAdd(0, 1));
    }

    #[test]
    fn rejects_unsupported_tokens() {
        let err = parse_bristol("1 3\n2 1 1\n1 1\n\n2 1 0 1 2 MAND\n").unwrap_err();
        assert_eq!(err, CircuitError::UnknownKind { line: 5, kind: "MAND".into() });
        assert!(parse_bristol("2 3\n2 1 1\n1 1\n\n2 1 0 1 2 AND\n").is_err());
    }
}
