//! Scenario runner, parameter sweeps and file output for `bosetracer-core`.

pub mod checks;
pub mod config;
pub mod output;
pub mod runner;
pub mod sweep;

use std::fmt;

pub use config::{load_config, parse_config, Overrides};
pub use runner::{run_scenario, RunArtifact, Summary};
pub use sweep::{run_sweep, SweepSpec};

#[derive(Debug)]
pub enum SimError {
    Core(bosetracer_core::Error),
    Config(String),
    Io(String),
}

impl SimError {
    /// Stable reason code for summaries and exit messages.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Core(e) => e.code(),
            SimError::Config(_) => "invalid_config",
            SimError::Io(_) => "io",
        }
    }
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Core(e) => write!(f, "{e}"),
            SimError::Config(m) => write!(f, "configuration: {m}"),
            SimError::Io(m) => write!(f, "io: {m}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<bosetracer_core::Error> for SimError {
    fn from(e: bosetracer_core::Error) -> Self {
        SimError::Core(e)
    }
}
