//! Scenario configuration, the closed-loop runner and its outputs.

mod config;
pub mod log;
mod run;

pub use config::{
    load_config, ControllerMode, EvaderConfig, InitialState, NominalSource, ObstacleConfig,
    ScenarioConfig, Waypoint,
};
pub use log::TrajectoryLog;
pub use run::{compare_modes, run_scenario, write_outputs, Comparison, FaultInfo, RunOutcome, RunReport};
