//! Configuration, orchestration and artifact emission.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_config_str, Built, BuiltModel, ExperimentConfig, Family};
pub use runner::{config_hash, run_experiment, RunManifest};

use crate::error::Error;

/// Process exit codes of the `fspde` binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONDITION_FAILED: i32 = 1;
    pub const INPUT_ERROR: i32 = 2;
    pub const NUMERICAL_FAILURE: i32 = 3;
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        exit::NUMERICAL_FAILURE
    } else {
        exit::INPUT_ERROR
    }
}
