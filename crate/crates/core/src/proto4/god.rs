//! Moving from four-party shares to a three-party instance after an abort.
//!
//! The fallback runs the semi-honest three-party protocol among a set of
//! three parties. Shares of the last passed checkpoint are converted to the
//! three-party layout with fresh masks:
//!
//! - `M` holds `a3` (P2, else P1) and becomes role 2,
//! - `K` holds `x3` (P3, else P4) and becomes role 3,
//! - the remaining party `D` becomes role 1.
//!
//! New masks `X2` and `X3` come from the tapes `{D, M}` and `{D, K}`. `K` sends
//! `X3 - x3` to `M` and `M` sends `a3 + X2` to `K`.

use crate::party::{PartyId, Role, RoleMap};
use crate::proto3::Share3;
use crate::ring::{Phase, Ring};
use crate::session::{ProtocolError, Session};
use crate::tape::{DomainTag, KeySet, Purpose};
use crate::transport::MsgKind;

use PartyId::*;

/// Party sets of the successive fallback segments.
pub const FALLBACK_SETS: [[PartyId; 3]; 4] = [[P1, P2, P3], [P2, P3, P4], [P1, P3, P4], [P1, P2, P4]];

/// Three-party role assignment `(D, M, K)` for a fallback set.
pub fn fallback_map(set: [PartyId; 3]) -> RoleMap {
    let m = if set.contains(&P2) { P2 } else { P1 };
    let k = if set.contains(&P3) { P3 } else { P4 };
    let d = set.iter().copied().find(|p| *p != m && *p != k).expect("three parties");
    RoleMap::new(&[d, m, k]).expect("distinct parties")
}

fn tag(segment: u16, id: u32) -> DomainTag {
    DomainTag::new(DomainTag::PROTO4, Purpose::Reshare, segment, id)
}

/// `a3` and `x3` as far as this party's four-party record holds them.
fn held<R: Ring>(me: PartyId, sh: [R; 3]) -> (Option<R>, Option<R>) {
    match me {
        P1 | P2 => (Some(sh[1]), None),
        P3 => (None, Some(sh[0])),
        _ => (None, Some(sh[2])),
    }
}

/// Converts this party's snapshot into its record for the fallback under
/// `map`. Entries that are `None` stay dead.
pub fn reshare<R: Ring>(
    s: &mut Session,
    map: &RoleMap,
    segment: u16,
    shares: &[Option<[R; 3]>],
) -> Result<Vec<Option<Share3<R>>>, ProtocolError> {
    let (d, m, k) = (map.party(Role::R1), map.party(Role::R2), map.party(Role::R3));
    let live: Vec<usize> = (0..shares.len()).filter(|&i| shares[i].is_some()).collect();
    let me = s.me;
    let x2 = |s: &Session, w: usize| s.keys.draw::<R>(KeySet::of(&[d, m]), tag(segment, w as u32), 0);
    let x3 = |s: &Session, w: usize| s.keys.draw::<R>(KeySet::of(&[d, k]), tag(segment, w as u32), 0);
    let check = !map.parties().contains(&P1);
    s.round();
    if check {
        reshare_check(s, segment, shares, &live)?;
    }
    let mut out = vec![None; shares.len()];
    if me == d {
        for &w in &live {
            out[w] = Some([x2(s, w)?, x3(s, w)?]);
        }
        return Ok(out);
    }
    let mut send = Vec::with_capacity(live.len());
    for &w in &live {
        let (a3, x3_old) = held::<R>(me, shares[w].expect("live"));
        send.push(if me == m {
            a3.expect("holds a3") + x2(s, w)?
        } else {
            x3(s, w)? - x3_old.expect("holds x3")
        });
    }
    let peer = if me == m { k } else { m };
    s.send(peer, Phase::Online, MsgKind::Reshare, 0, &send)?;
    let got: Vec<R> = s.recv(peer, MsgKind::Reshare, live.len())?;
    for (i, &w) in live.iter().enumerate() {
        let (a3, x3_old) = held::<R>(me, shares[w].expect("live"));
        out[w] = Some(if me == m {
            [x2(s, w)?, a3.expect("holds a3") + got[i]]
        } else {
            [got[i] - x3_old.expect("holds x3"), R::zero()]
        });
    }
    Ok(out)
}

/// With P1 gone, P2 and P3 blind their masked values with a common `r` and
/// P4 checks `a2' - a3' = x1`.
fn reshare_check<R: Ring>(
    s: &mut Session,
    segment: u16,
    shares: &[Option<[R; 3]>],
    live: &[usize],
) -> Result<(), ProtocolError> {
    let pad = |s: &Session, w: usize| s.keys.draw::<R>(KeySet::of(&[P2, P3]), tag(segment, w as u32), 1);
    match s.me {
        P2 | P3 => {
            let mut xs = Vec::with_capacity(live.len());
            for &w in live {
                xs.push(shares[w].expect("live")[1] + pad(s, w)?);
            }
            s.send(P4, Phase::Online, MsgKind::Reshare, 1, &xs)
        }
        P4 => {
            let a3: Vec<R> = s.recv(P2, MsgKind::Reshare, live.len())?;
            let a2: Vec<R> = s.recv(P3, MsgKind::Reshare, live.len())?;
            for (i, &w) in live.iter().enumerate() {
                if a2[i] - a3[i] != shares[w].expect("live")[0] {
                    return Err(ProtocolError::ReshareCheck);
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::party::COMPUTE_PARTIES;
    use crate::ring::{Width, Zk};
    use crate::runner::{spawn_parties, RunOptions};
    use proptest::prelude::*;

    type R = Zk<u32>;

    /// Four-party records of `a` under masks `x2`, `x3`.
    fn record(p: PartyId, a: R, x2: R, x3: R) -> [R; 3] {
        let x1 = x2 - x3;
        match p {
            P1 => [x1, a + x3, R::zero()],
            P2 => [x2, a + x3, R::zero()],
            P3 => [x3, a + x2, R::zero()],
            _ => [x1, x2, x3],
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn reshared_records_open_to_the_same_values(
            wires in proptest::collection::vec((any::<u32>(), any::<u32>(), any::<u32>(), any::<bool>()), 1..12),
            which in 0usize..4,
        ) {
            let set = FALLBACK_SETS[which];
            let map = fallback_map(set);
            let vals: Vec<Option<(R, R, R)>> =
                wires.iter().map(|&(a, x2, x3, live)| live.then_some((Zk(a), Zk(x2), Zk(x3)))).collect();
            let runs = spawn_parties(&COMPUTE_PARTIES, &RunOptions::default(), Width::W32, None, |s| {
                if !set.contains(&s.me) {
                    return Ok(Vec::new());
                }
                let mine: Vec<Option<[R; 3]>> = vals.iter().map(|v| v.map(|(a, x2, x3)| record(s.me, a, x2, x3))).collect();
                reshare::<R>(s, &map, 7, &mine)
            }).unwrap();
            let got: std::collections::BTreeMap<PartyId, Vec<Option<Share3<R>>>> =
                runs.into_iter().map(|r| (r.party, r.value.unwrap())).collect();
            let (d, m, k) = (map.party(Role::R1), map.party(Role::R2), map.party(Role::R3));
            for (w, v) in vals.iter().enumerate() {
                let Some((a, _, _)) = *v else {
                    prop_assert!(got[&d][w].is_none());
                    continue;
                };
                let ([nx2, nx3], [mx2, a3], [a2, _]) = (got[&d][w].unwrap(), got[&m][w].unwrap(), got[&k][w].unwrap());
                prop_assert_eq!(mx2, nx2);
                prop_assert_eq!(a3 - nx3, a);
                prop_assert_eq!(a2 - nx2, a);
            }
        }
    }

    #[test]
    fn inconsistent_masked_values_fail_the_check() {
        let set = FALLBACK_SETS[1];
        let map = fallback_map(set);
        let (a, x2, x3) = (Zk(5u32), Zk(11), Zk(40));
        let runs = spawn_parties(&COMPUTE_PARTIES, &RunOptions::default(), Width::W32, None, |s| {
            if !set.contains(&s.me) {
                return Ok(Vec::new());
            }
            let mut rec = record(s.me, a, x2, x3);
            if s.me == P3 {
                rec[1] += Zk(1);
            }
            reshare::<R>(s, &map, 0, &[Some(rec)])
        })
        .unwrap();
        let p4 = runs.iter().find(|r| r.party == P4).unwrap();
        assert_eq!(p4.value, Err(ProtocolError::ReshareCheck));
    }

    #[test]
    fn fallback_roles() {
        let roles = |set| {
            let m = fallback_map(set);
            [Role::R1, Role::R2, Role::R3].map(|r| m.party(r))
        };
        assert_eq!(roles(FALLBACK_SETS[0]), [P1, P2, P3]);
        assert_eq!(roles(FALLBACK_SETS[1]), [P4, P2, P3]);
        assert_eq!(roles(FALLBACK_SETS[2]), [P4, P1, P3]);
        assert_eq!(roles(FALLBACK_SETS[3]), [P1, P2, P4]);
    }
}
