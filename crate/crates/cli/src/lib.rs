//! Scenario loading, subcommand dispatch and output files for the
//! `deceptive-nes` command line tool.

pub mod commands;
pub mod output;
pub mod scenario;

pub use commands::{dispatch, CliError, CommandKind, Grid, Options};
pub use scenario::{load_scenario, parse_scenario, write_scenario, Scenario, ScenarioError};
