//! Four-party computation secure against one malicious party.

pub mod algebra;
pub mod transcript;
pub mod engine;
mod fair;
pub mod god;

pub use fair::{abort_forger, FAIR_COMMIT_ID, FAIR_ROUND_A, FAIR_ROUND_B};
pub use engine::{run_party, Config4, Instance4, Outcome4, Snapshot, Term};
