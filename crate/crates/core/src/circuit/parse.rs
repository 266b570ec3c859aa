//! Line-oriented circuit format.
//!
//! ```text
//! ring 64
//! in a P1
//! in b P2
//! mul c a b
//! cadd d c 5
//! out d ALL
//! ```
//!
//! Several statements may share a line when separated by `;`.

use std::collections::HashMap;

use super::{Circuit, CircuitError, Gate, GateId, GateKind, Recipients};
use crate::party::PartyId;
use crate::ring::Width;

pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    let mut width = Width::W64;
    let mut gates: Vec<Gate> = Vec::new();
    let mut wires: HashMap<String, GateId> = HashMap::new();
    let mut seen_stmt = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        for stmt in body.split(';') {
            let toks: Vec<&str> = stmt.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            let err = |msg: String| CircuitError::Parse { line, msg };
            let lookup = |w: &str| -> Result<GateId, CircuitError> {
                wires.get(w).copied().ok_or(CircuitError::Dangling { line, wire: w.to_string() })
            };
            let arity = |n: usize| -> Result<(), CircuitError> {
                if toks.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("`{}` takes {} operands, found {}", toks[0], n - 1, toks.len() - 1)))
                }
            };

            let (kind, name) = match toks[0] {
                "ring" => {
                    if seen_stmt {
                        return Err(err("`ring` must come before any gate".into()));
                    }
                    arity(2)?;
                    let k: u32 = toks[1].parse().map_err(|_| err(format!("bad width `{}`", toks[1])))?;
                    width = Width::try_from(k).map_err(|e| err(e.to_string()))?;
                    seen_stmt = true;
                    continue;
                }
                "in" => {
                    arity(3)?;
                    let owner: PartyId = toks[2].parse().map_err(|e: crate::party::UnknownParty| err(e.to_string()))?;
                    (GateKind::Input { owner }, Some(toks[1]))
                }
                op @ ("add" | "mul") => {
                    arity(4)?;
                    let (a, b) = (lookup(toks[2])?, lookup(toks[3])?);
                    let kind = if op == "add" { GateKind::Add(a, b) } else { GateKind::Mul(a, b) };
                    (kind, Some(toks[1]))
                }
                op @ ("cadd" | "cmul") => {
                    arity(4)?;
                    let a = lookup(toks[2])?;
                    let c = parse_const(toks[3]).ok_or_else(|| err(format!("bad constant `{}`", toks[3])))?
                        & width.mask();
                    let kind = if op == "cadd" { GateKind::ConstAdd(a, c) } else { GateKind::ConstMul(a, c) };
                    (kind, Some(toks[1]))
                }
                "out" => {
                    if toks.len() < 3 {
                        return Err(err("`out` needs a wire and recipients".into()));
                    }
                    let src = lookup(toks[1])?;
                    let recipients = parse_recipients(&toks[2..]).map_err(err)?;
                    (GateKind::Output { src, recipients }, None)
                }
                other => return Err(CircuitError::UnknownKind { line, kind: other.to_string() }),
            };
            seen_stmt = true;
            let id = gates.len() as GateId;
            if let Some(name) = name {
                if wires.insert(name.to_string(), id).is_some() {
                    return Err(err(format!("wire `{name}` defined twice")));
                }
            }
            let name = name.map(str::to_string).or_else(|| match kind {
                GateKind::Output { src, .. } => gates[src as usize].name.clone(),
                _ => None,
            });
            gates.push(Gate { id, kind, name });
        }
    }
    Circuit::new(width, gates)
}

fn parse_const(s: &str) -> Option<u64> {
    if let Some(hex) = s.strip_prefix("0x") {
        return u64::from_str_radix(hex, 16).ok();
    }
    if let Some(neg) = s.strip_prefix('-') {
        return neg.parse::<u64>().ok().map(u64::wrapping_neg);
    }
    s.parse().ok()
}

fn parse_recipients(toks: &[&str]) -> Result<Recipients, String> {
    if toks.len() == 1 && toks[0].eq_ignore_ascii_case("ALL") {
        return Ok(Recipients::ALL);
    }
    let mut parties = Vec::new();
    for t in toks.iter().flat_map(|t| t.split(',')).filter(|t| !t.is_empty()) {
        let p: PartyId = t.parse().map_err(|e: crate::party::UnknownParty| e.to_string())?;
        if p == PartyId::Outsider {
            return Err("outputs go to computing parties only".into());
        }
        parties.push(p);
    }
    if parties.is_empty() {
        return Err("empty recipient list".into());
    }
    Ok(Recipients::of(&parties))
}
