//! Arithmetic/boolean circuits: representation, deterministic layering and a
//! cleartext evaluator.

mod bristol;
mod eval;
mod parse;
pub mod random;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use bristol::parse_bristol;
pub use eval::{evaluate_as, evaluate_cleartext, Inputs, Outputs};
pub(crate) use eval::input_values;
pub use parse::parse_circuit;

use crate::party::{PartyId, COMPUTE_PARTIES};
use crate::ring::{RingError, Width};

pub type GateId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CircuitError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown gate kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: reference to undefined wire `{wire}`")]
    Dangling { line: usize, wire: String },
    #[error("gate {0} refers to a gate that does not exist")]
    DanglingId(GateId),
    #[error("circuit contains a cycle through gate {0}")]
    Cycle(GateId),
    #[error("missing input value for `{0}`")]
    MissingInput(String),
    #[error(transparent)]
    Ring(#[from] RingError),
}

/// Which parties learn an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Recipients(u8);

impl Recipients {
    pub const ALL: Recipients = Recipients(0b1111);

    pub fn of(parties: &[PartyId]) -> Recipients {
        Recipients(parties.iter().filter(|p| **p != PartyId::Outsider).fold(0, |m, p| m | p.bit()))
    }

    pub fn contains(self, p: PartyId) -> bool {
        p != PartyId::Outsider && self.0 & p.bit() != 0
    }

    pub fn parties(self) -> impl Iterator<Item = PartyId> {
        COMPUTE_PARTIES.into_iter().filter(move |p| self.contains(*p))
    }
}

impl fmt::Display for Recipients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Recipients::ALL {
            return write!(f, "ALL");
        }
        let names: Vec<String> = self.parties().map(|p| p.to_string()).collect();
        write!(f, "{}", names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GateKind {
    Input { owner: PartyId },
    Add(GateId, GateId),
    Mul(GateId, GateId),
    /// Adds a public constant, already reduced mod `2^k`.
    ConstAdd(GateId, u64),
    ConstMul(GateId, u64),
    Output { src: GateId, recipients: Recipients },
}

impl GateKind {
    pub fn inputs(&self) -> Vec<GateId> {
        match *self {
            GateKind::Input { .. } => vec![],
            GateKind::Add(a, b) | GateKind::Mul(a, b) => vec![a, b],
            GateKind::ConstAdd(a, _) | GateKind::ConstMul(a, _) => vec![a],
            GateKind::Output { src, .. } => vec![src],
        }
    }

    fn map_inputs(&self, f: impl Fn(GateId) -> GateId) -> GateKind {
        match *self {
            GateKind::Input { owner } => GateKind::Input { owner },
            GateKind::Add(a, b) => GateKind::Add(f(a), f(b)),
            GateKind::Mul(a, b) => GateKind::Mul(f(a), f(b)),
            GateKind::ConstAdd(a, c) => GateKind::ConstAdd(f(a), c),
            GateKind::ConstMul(a, c) => GateKind::ConstMul(f(a), c),
            GateKind::Output { src, recipients } => GateKind::Output { src: f(src), recipients },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub id: GateId,
    pub kind: GateKind,
    pub name: Option<String>,
}

/// Gates of one layer. Multiplications are independent of each other and are
/// evaluated first; linear gates follow in ascending id order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Layer {
    pub muls: Vec<GateId>,
    pub linear: Vec<GateId>,
}

/// Immutable circuit in topological order (every input id is smaller than the
/// gate that reads it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    width: Width,
    gates: Vec<Gate>,
    layers: Vec<Layer>,
    mul_index: Vec<Option<u32>>,
    muls: Vec<GateId>,
}

impl Circuit {
    /// Builds a circuit from gates in arbitrary order. Gate ids only need to be
    /// unique; the result is renumbered densely in topological order, ties
    /// broken by the original id.
    pub fn new(width: Width, mut gates: Vec<Gate>) -> Result<Circuit, CircuitError> {
        gates.sort_by_key(|g| g.id);
        let pos: HashMap<GateId, usize> = gates.iter().enumerate().map(|(i, g)| (g.id, i)).collect();
        let n = gates.len();
        let mut indegree = vec![0usize; n];
        let mut readers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, g) in gates.iter().enumerate() {
            for src in g.kind.inputs() {
                let j = *pos.get(&src).ok_or(CircuitError::DanglingId(src))?;
                if matches!(gates[j].kind, GateKind::Output { .. }) {
                    return Err(CircuitError::DanglingId(src));
                }
                indegree[i] += 1;
                readers[j].push(i);
            }
        }
        // Kahn's algorithm with a min-heap on the original position.
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
            (0..n).filter(|&i| indegree[i] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(i)) = ready.pop() {
            order.push(i);
            for &r in &readers[i] {
                indegree[r] -= 1;
                if indegree[r] == 0 {
                    ready.push(std::cmp::Reverse(r));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).expect("some gate is on a cycle");
            return Err(CircuitError::Cycle(gates[stuck].id));
        }
        let mut new_id = vec![0 as GateId; n];
        for (k, &i) in order.iter().enumerate() {
            new_id[i] = k as GateId;
        }
        let renumbered = order
            .iter()
            .enumerate()
            .map(|(k, &i)| Gate {
                id: k as GateId,
                kind: gates[i].kind.map_inputs(|src| new_id[pos[&src]]),
                name: gates[i].name.clone(),
            })
            .collect();
        Ok(Self::from_sorted(width, renumbered))
    }

    /// Gates are already numbered `0..n` in topological order.
    fn from_sorted(width: Width, gates: Vec<Gate>) -> Circuit {
        let mut level = vec![0usize; gates.len()];
        for g in &gates {
            let base = g.kind.inputs().iter().map(|&i| level[i as usize]).max().unwrap_or(0);
            level[g.id as usize] = match g.kind {
                GateKind::Mul(..) => base + 1,
                _ => base,
            };
        }
        let depth = level.iter().copied().max().unwrap_or(0);
        let mut layers = vec![Layer::default(); depth + 1];
        for g in &gates {
            let layer = &mut layers[level[g.id as usize]];
            match g.kind {
                GateKind::Mul(..) => layer.muls.push(g.id),
                _ => layer.linear.push(g.id),
            }
        }
        let mut mul_index = vec![None; gates.len()];
        let mut muls = Vec::new();
        for layer in &layers {
            for &m in &layer.muls {
                mul_index[m as usize] = Some(muls.len() as u32);
                muls.push(m);
            }
        }
        Circuit { width, gates, layers, mul_index, muls }
    }

    pub fn width(&self) -> Width {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id as usize]
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Layer 0 holds the inputs and anything linear over them; layer `L > 0`
    /// starts with the multiplications of multiplicative depth `L`.
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of multiplication layers.
    pub fn depth(&self) -> usize {
        self.layers.iter().filter(|l| !l.muls.is_empty()).count()
    }

    /// Position of a multiplication gate in evaluation order.
    pub fn mul_index(&self, id: GateId) -> Option<u32> {
        self.mul_index[id as usize]
    }

    /// Multiplication gates in evaluation order.
    pub fn muls(&self) -> &[GateId] {
        &self.muls
    }

    pub fn inputs(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| matches!(g.kind, GateKind::Input { .. }))
    }

    pub fn outputs(&self) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(|g| matches!(g.kind, GateKind::Output { .. }))
    }

    /// Display name of a gate's wire (its declared name or `g<id>`).
    pub fn wire_name(&self, id: GateId) -> String {
        self.gates[id as usize].name.clone().unwrap_or_else(|| format!("g{id}"))
    }

    /// For each gate, the last layer index in which its value is read
    /// (`None` if nobody reads it). Output gates count as readers.
    pub fn last_use(&self) -> Vec<Option<usize>> {
        let mut last = vec![None; self.gates.len()];
        for (li, layer) in self.layers.iter().enumerate() {
            for &g in layer.muls.iter().chain(&layer.linear) {
                for src in self.gates[g as usize].kind.inputs() {
                    last[src as usize] = Some(li);
                }
            }
        }
        last
    }

    /// Same circuit with every gate moved to a different width. Constants are
    /// reduced mod the new modulus.
    pub fn with_width(&self, width: Width) -> Circuit {
        let mask = width.mask();
        let gates = self
            .gates
            .iter()
            .map(|g| Gate {
                id: g.id,
                kind: match g.kind {
                    GateKind::ConstAdd(a, c) => GateKind::ConstAdd(a, c & mask),
                    GateKind::ConstMul(a, c) => GateKind::ConstMul(a, c & mask),
                    ref k => k.clone(),
                },
                name: g.name.clone(),
            })
            .collect();
        Self::from_sorted(width, gates)
    }
}
