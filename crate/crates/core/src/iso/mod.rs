//! Transaction histories with derivation events, the direct serialization
//! graph they induce, and the isolation phenomena detected on it.
//!
//! Writes install versions. A derivation produces a version computed from
//! other versions inside its own transaction; dependencies pass through
//! derivation paths to the writers underneath, so the transaction that ran
//! the derivation does not itself appear on those edges.

mod dsg;
mod history;

pub use dsg::{
    build_dsg, derives_from, detect_phenomena, drop_encapsulated, is_encapsulated, move_derivation, witness_holds,
    Dsg, Edge, EdgeKind, Phenomenon, PhenomenonKind, Provenance, Witness,
};
pub use history::{Event, EventKind, History, HistoryError, Outcome, TxnId, VersionRef};

#[cfg(test)]
mod tests;
