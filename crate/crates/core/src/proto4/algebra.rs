//! Per-role formulas of the four-party multiplication and its checks.
//!
//! Inputs `a`, `b` with masks `x`, `y`; `a3 = a + x3`, `a2 = a + x2`,
//! `x1 = x2 - x3`, and the same for `b`.

use crate::ring::{MulMeter, Phase, Ring};

/// Role 1, offline, to role 3: `o1 = -x1*y1 - r124`.
pub fn o1<R: Ring>(m: &mut MulMeter, x1: R, y1: R, r124: R) -> R {
    -m.mul(Phase::Offline, x1, y1) - r124
}

/// Role 4, offline, to role 1: `o4 = x2*y2 - x3*y3 - r234`.
pub fn o4<R: Ring>(m: &mut MulMeter, x2: R, y2: R, x3: R, y3: R, r234: R) -> R {
    m.mul(Phase::Offline, x2, y2) - m.mul(Phase::Offline, x3, y3) - r234
}

/// Role 2 to role 3: `m2 = a3*b3 + x2*y2 + r124 + z2`.
pub fn m2<R: Ring>(m: &mut MulMeter, a3: R, b3: R, x2: R, y2: R, r124: R, z2: R) -> R {
    m.mul(Phase::Online, a3, b3) + m.mul(Phase::Online, x2, y2) + r124 + z2
}

/// Role 3 to role 2: `m3 = a2*b2 + o1 + x3*y3 + z3`.
pub fn m3<R: Ring>(m: &mut MulMeter, a2: R, b2: R, o1: R, x3: R, y3: R, z3: R) -> R {
    m.mul(Phase::Online, a2, b2) + o1 + m.mul(Phase::Online, x3, y3) + z3
}

/// Role 3 to role 1: `m3' = (a2 - x3)*(b2 - y3) + r234 + z3`.
pub fn m3p<R: Ring>(m: &mut MulMeter, a2: R, b2: R, x3: R, y3: R, r234: R, z3: R) -> R {
    m.mul(Phase::Online, a2 - x3, b2 - y3) + r234 + z3
}

/// Role 2's output share: `c3 = m3 - a3*y2 - b3*x2 + r124`.
pub fn c3_role2<R: Ring>(m: &mut MulMeter, m3: R, a3: R, b3: R, x2: R, y2: R, r124: R) -> R {
    m3 - m.mul(Phase::Online, a3, y2) - m.mul(Phase::Online, b3, x2) + r124
}

/// Role 3's output share: `c2 = m2 - a2*y3 - b2*x3 + o1`.
pub fn c2_role3<R: Ring>(m: &mut MulMeter, m2: R, a2: R, b2: R, x3: R, y3: R, o1: R) -> R {
    m2 - m.mul(Phase::Online, a2, y3) - m.mul(Phase::Online, b2, x3) + o1
}

/// Role 1's output share: `c3 = m3' - a3*y1 - b3*x1 + o4 - 2*x1*y1`.
pub fn c3_role1<R: Ring>(m: &mut MulMeter, m3p: R, a3: R, b3: R, x1: R, y1: R, o4: R) -> R {
    let xy = m.mul(Phase::Online, x1, y1);
    m3p - m.mul(Phase::Online, a3, y1) - m.mul(Phase::Online, b3, x1) + o4 - xy - xy
}

/// Check (ii), held by roles 2 and 3: `m2 - m3 - r234`.
pub fn v23<R: Ring>(m2: R, m3: R, r234: R) -> R {
    m2 - m3 - r234
}

/// Check (iii), role 1's value for the same quantity:
/// `a3*b3 - a2*b2 + o4 + x1*y1 + z1 + 2*r124`, with `a2 = a3 + x1`.
#[allow(clippy::too_many_arguments)]
pub fn v1<R: Ring>(m: &mut MulMeter, a3: R, b3: R, x1: R, y1: R, o4: R, z1: R, r124: R) -> R {
    let (a2, b2) = (a3 + x1, b3 + y1);
    m.mul(Phase::Online, a3, b3) - m.mul(Phase::Online, a2, b2) + o4 + m.mul(Phase::Online, x1, y1) + z1 + r124 + r124
}
