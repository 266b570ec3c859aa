//! Party identifiers and role assignments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    P1,
    P2,
    P3,
    P4,
    #[serde(rename = "O")]
    Outsider,
}

pub const EVALUATORS: [PartyId; 3] = [PartyId::P1, PartyId::P2, PartyId::P3];
pub const COMPUTE_PARTIES: [PartyId; 4] = [PartyId::P1, PartyId::P2, PartyId::P3, PartyId::P4];
pub const ALL_PARTIES: [PartyId; 5] =
    [PartyId::P1, PartyId::P2, PartyId::P3, PartyId::P4, PartyId::Outsider];

impl PartyId {
    pub fn index(self) -> usize {
        match self {
            PartyId::P1 => 0,
            PartyId::P2 => 1,
            PartyId::P3 => 2,
            PartyId::P4 => 3,
            PartyId::Outsider => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<PartyId> {
        ALL_PARTIES.get(i).copied()
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Outsider => write!(f, "O"),
            p => write!(f, "P{}", p.index() + 1),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown party `{0}`")]
pub struct UnknownParty(pub String);

impl FromStr for PartyId {
    type Err = UnknownParty;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "P1" | "p1" | "1" => Ok(PartyId::P1),
            "P2" | "p2" | "2" => Ok(PartyId::P2),
            "P3" | "p3" | "3" => Ok(PartyId::P3),
            "P4" | "p4" | "4" => Ok(PartyId::P4),
            "O" | "o" | "Outsider" => Ok(PartyId::Outsider),
            other => Err(UnknownParty(other.to_string())),
        }
    }
}

/// A protocol role. Roles are numbered like the parties that play them in the
/// unpermuted protocol: `Role(0)` is the role of P1, `Role(3)` the role of P4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Role(pub u8);

impl Role {
    pub const R1: Role = Role(0);
    pub const R2: Role = Role(1);
    pub const R3: Role = Role(2);
    pub const R4: Role = Role(3);
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "role-{}", self.0 + 1)
    }
}

/// Bijective mapping from protocol roles to physical parties. The outsider is
/// never permuted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoleMap {
    phys: [PartyId; 4],
    n: u8,
}

impl RoleMap {
    pub fn identity(n: usize) -> RoleMap {
        assert!(n == 3 || n == 4, "role maps cover 3 or 4 parties");
        RoleMap { phys: COMPUTE_PARTIES, n: n as u8 }
    }

    /// `assignment[r]` is the physical party playing role `r`.
    pub fn new(assignment: &[PartyId]) -> Option<RoleMap> {
        let n = assignment.len();
        if !(n == 3 || n == 4) {
            return None;
        }
        let mut seen = 0u8;
        let mut phys = COMPUTE_PARTIES;
        for (r, &p) in assignment.iter().enumerate() {
            if p == PartyId::Outsider || seen & p.bit() != 0 {
                return None;
            }
            seen |= p.bit();
            phys[r] = p;
        }
        Some(RoleMap { phys, n: n as u8 })
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn party(&self, role: Role) -> PartyId {
        self.phys[role.0 as usize]
    }

    pub fn role_of(&self, p: PartyId) -> Option<Role> {
        self.phys[..self.len()].iter().position(|&q| q == p).map(|r| Role(r as u8))
    }

    pub fn parties(&self) -> &[PartyId] {
        &self.phys[..self.len()]
    }

    /// Swaps the parties playing roles `a` and `b`.
    pub fn swapped(mut self, a: Role, b: Role) -> RoleMap {
        self.phys.swap(a.0 as usize, b.0 as usize);
        self
    }
}

impl fmt::Display for RoleMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, p) in self.parties().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "}}")
    }
}
