//! Scenario ingestion, execution orchestration and artifact export for the
//! hybrid mechanics simulator.

pub mod export;
pub mod run;
pub mod scenario;

pub use run::{run_scenario, RunOutcome};
pub use scenario::{load_scenario, Mode, Scenario, ScenarioError};
