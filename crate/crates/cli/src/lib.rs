//! Batch front end for the `vnoma` library: scenario files, SNR sweeps,
//! Monte Carlo validation, optimization reports and DMT tables.

pub mod dmt;
pub mod error;
pub mod optimize;
pub mod scenario;
pub mod sweep;

pub use error::{CliError, CliResult};
pub use scenario::{load_scenario, parse_scenario, PowerMode, Scenario, SweepGrid};
