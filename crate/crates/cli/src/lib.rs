//! Scenario-driven runner for the `qsd-core` engines.

pub mod commands;
pub mod experiments;
pub mod output;
pub mod scenario;

pub use experiments::{run_scenario, Outcome};
pub use output::Artifacts;
pub use scenario::Scenario;
