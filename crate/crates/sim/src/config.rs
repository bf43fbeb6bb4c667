//! Loading configurations and applying command-line overrides.

use std::fs;
use std::path::Path;

use bosetracer_core::{MemoryCap, ModelConfig};

use crate::SimError;

/// Environment variable overriding the many-body sample cap.
pub const MEMORY_CAP_ENV: &str = "SIM_MEMORY_CAP_SAMPLES";

pub fn parse_config(text: &str) -> Result<ModelConfig, SimError> {
    let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ModelConfig, SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub stride: Option<usize>,
    pub inhomogeneity_at_x: bool,
    pub tracers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ModelConfig) -> Result<(), SimError> {
        if let Some(s) = self.stride {
            cfg.run.stride = s;
        }
        if self.inhomogeneity_at_x {
            cfg.variant.inhomogeneity_at_x = true;
        }
        if let Some(m) = self.tracers {
            cfg.variant.m_tracers = m;
        }
        cfg.validate()?;
        Ok(())
    }
}

/// Cap from the environment, else the config, else the default.
pub fn memory_cap(cfg: &ModelConfig) -> Result<MemoryCap, SimError> {
    match std::env::var(MEMORY_CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(MemoryCap)
            .map_err(|_| SimError::Config(format!("{MEMORY_CAP_ENV} must be a sample count, got {v:?}"))),
        Err(_) => Ok(cfg.run.memory_cap_samples.map(MemoryCap).unwrap_or(MemoryCap::DEFAULT)),
    }
}
