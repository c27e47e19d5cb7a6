//! Parties, scenarios and the drivers that run them.

pub mod builtin;
pub mod enumerate;
pub mod protocol;
pub mod run;
pub mod safety;
pub mod scenario;
pub mod session;
pub mod strategy;

pub use enumerate::{
    enumerate, enumerate_with, enumeration_config, EnumerateError, EnumerateOptions, EnumerationReport, Finding,
    MAX_DEPTH,
};
pub use run::{run_scenario, ScenarioRun, DEFAULT_SEED};
pub use safety::{Violation, ViolationKind};
pub use scenario::{ScenarioConfig, ScenarioError, ScenarioKind};
pub use session::{AgentAction, Outcome, Session};
pub use strategy::{Choice, Decision, Duty};
