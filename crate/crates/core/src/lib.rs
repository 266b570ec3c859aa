//! Honest-majority three- and four-party computation over `Z_{2^k}` with
//! replicated masked sharing, a simulated and TCP transport, role scheduling
//! and an adversary harness.

pub mod bench;
pub mod circuit;
pub mod harness;
pub mod party;
pub mod proto3;
pub mod proto4;
pub mod ring;
pub mod runner;
pub mod scheduler;
pub mod session;
pub mod tape;
pub mod transport;

pub use party::{PartyId, Role, RoleMap};
pub use ring::{Bit, Phase, Ring, RingElement, Width, Zk};

pub type Ring1 = Bit;
pub type Ring8 = Zk<u8>;
pub type Ring16 = Zk<u16>;
pub type Ring32 = Zk<u32>;
pub type Ring64 = Zk<u64>;
