//! Configuration, sweep orchestration, time-frequency analysis and the
//! scenario runner behind the command-line tool.

pub mod analysis;
pub mod config;
pub mod device;
pub mod output;
pub mod scenarios;

pub use config::RunConfig;
pub use scenarios::{run_scenario, RunRequest, SCENARIOS};
