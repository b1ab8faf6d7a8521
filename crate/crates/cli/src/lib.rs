//! Experiment runner for the `bregflow` particle flows: TOML configuration,
//! CSV/JSON/SVG output and deterministic replay.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod run;

pub use config::{Experiment, LoadedConfig, RunConfig};
pub use error::CliError;
pub use run::{run_flow, run_invariance, run_oracle_compare, selftest};
