//! The simulated ledgers: ACoin (UTXO + scripts) and BCoin (accounts +
//! contracts), sharing one clock.

pub mod clock;
pub mod contract;
pub mod script;
pub mod utxo;
pub mod world;

pub use clock::{Clock, ClockError};
pub use contract::{Balances, Call, CallError, Contract, ContractChain, ContractId, HashLock};
pub use script::{eval_condition, EvalContext, ScriptCondition, Witness};
pub use utxo::{Lock, Output, OutputId, RejectReason, Transaction, TxId, TxIn, TxOut, UtxoChain};
pub use world::{Action, Effect, Holder, Rejection, World};
