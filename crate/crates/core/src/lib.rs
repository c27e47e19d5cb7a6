//! Deterministic two-ledger simulator for HTLC-collateralized cross-chain
//! loans, with scenario runner, trace replay and an adversarial enumerator.

pub mod agents;
pub mod chain;
pub mod collateral;
pub mod loan;
pub mod primitives;
pub mod trace;
