//! Configuration files, presets, run drivers, the invariant battery and
//! the command line.

pub mod check;
pub mod cli;
pub mod config;
pub mod run;

pub use config::{parse_config, preset, InitialData, Model, QSource, RunConfig, PRESETS};
pub use run::{execute, execute_sweep, RunSummary};
