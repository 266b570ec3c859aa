//! Role assignments for homogenization: one permutation per parallel circuit
//! instance, or a per-gate rotation of the three evaluator roles.

use thiserror::Error;

use crate::party::{PartyId, Role, RoleMap, COMPUTE_PARTIES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("role schedules exist for 3 or 4 parties, not {0}")]
pub struct ScheduleError(pub usize);

/// All `n!` assignments of the roles to `P1..Pn`, in lexicographic order of
/// the party sequence (role 1 first).
pub fn permutation_schedule(n: usize) -> Result<Vec<RoleMap>, ScheduleError> {
    if !(n == 3 || n == 4) {
        return Err(ScheduleError(n));
    }
    fn rec(rest: &mut Vec<PartyId>, prefix: &mut Vec<PartyId>, out: &mut Vec<RoleMap>) {
        if rest.is_empty() {
            out.push(RoleMap::new(prefix).expect("permutation"));
            return;
        }
        for i in 0..rest.len() {
            let p = rest.remove(i);
            prefix.push(p);
            rec(rest, prefix, out);
            prefix.pop();
            rest.insert(i, p);
        }
    }
    let mut out = Vec::new();
    rec(&mut COMPUTE_PARTIES[..n].to_vec(), &mut Vec::new(), &mut out);
    Ok(out)
}

/// Evaluator roles in force for the multiplication with the given index.
/// Starting from the identity, roles 1 and 2 swap after each even-indexed
/// multiplication and roles 2 and 3 after each odd one; P4 never moves.
pub fn rotation_role(mul_index: u32) -> RoleMap {
    (0..mul_index % 6).fold(RoleMap::identity(4), after_mul)
}

/// The assignment that follows `map` once multiplication `g` is done.
pub fn after_mul(map: RoleMap, g: u32) -> RoleMap {
    if g.is_multiple_of(2) {
        map.swapped(Role::R1, Role::R2)
    } else {
        map.swapped(Role::R2, Role::R3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;
    use PartyId::*;

    #[test]
    fn three_party_list() {
        let got: Vec<Vec<PartyId>> =
            permutation_schedule(3).unwrap().iter().map(|m| m.parties().to_vec()).collect();
        let (i, j, k) = (P1, P2, P3);
        let listed =
            vec![vec![i, j, k], vec![i, k, j], vec![j, i, k], vec![j, k, i], vec![k, i, j], vec![k, j, i]];
        assert_eq!(got, listed);
    }

    #[test]
    fn four_parties_give_24_distinct_maps() {
        let all = permutation_schedule(4).unwrap();
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), 24);
        assert_eq!(all[0], RoleMap::identity(4));
        assert_eq!(permutation_schedule(5), Err(ScheduleError(5)));
        assert_eq!(permutation_schedule(2), Err(ScheduleError(2)));
    }

    #[test]
    fn rotation_has_period_six() {
        let seen: BTreeSet<RoleMap> = (0..6).map(rotation_role).collect();
        assert_eq!(seen.len(), 6);
        assert_eq!(rotation_role(6), rotation_role(0));
        assert_eq!(rotation_role(0), RoleMap::identity(4));
        // Composing the transpositions by hand.
        assert_eq!(rotation_role(1).parties(), &[P2, P1, P3, P4]);
        assert_eq!(rotation_role(2).parties(), &[P2, P3, P1, P4]);
        for g in 0..12 {
            assert_eq!(rotation_role(g).party(Role::R4), P4);
            assert_eq!(rotation_role(g + 1), after_mul(rotation_role(g), g));
        }
    }
}
