//! The run configuration file and its flag/environment precedence.
//!
//! Precedence, highest first: `DPDSYN_OUT_DIR` (output directory only),
//! command-line flags, config-file values, built-in defaults. Unknown keys in
//! the file are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dpdsyn_core::data::PreprocessPolicy;
use dpdsyn_core::eval::{DownstreamHyper, DownstreamModelKind, TrainerSettings};
use dpdsyn_core::rng;

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "DPDSYN_OUT_DIR";

fn default_delta() -> f64 {
    dpdsyn_core::accountant::DEFAULT_DELTA
}

fn default_seed() -> u64 {
    42
}

fn default_output_dir() -> String {
    "out".to_string()
}

fn default_kinds() -> Vec<DownstreamModelKind> {
    vec![DownstreamModelKind::Mlp, DownstreamModelKind::LinearSvm]
}

/// Everything a pipeline or benchmark run needs; JSON with a strict schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default = "default_kinds")]
    pub kinds: Vec<DownstreamModelKind>,
    #[serde(default)]
    pub trainer: TrainerSettings,
    #[serde(default)]
    pub downstream: DownstreamHyper,
    #[serde(default)]
    pub preprocess: PreprocessPolicy,
    #[serde(default)]
    pub measure_runtime: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(CliError::Config(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.kinds.is_empty() {
            return Err(CliError::Config("kinds must not be empty".into()));
        }
        Ok(())
    }

    /// Stable fingerprint of the effective configuration, embedded in every
    /// artifact this run emits.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", rng::fingerprint(json.as_bytes()))
    }

    /// Output directory after applying the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var(OUT_DIR_ENV) {
            Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => PathBuf::from(&self.output_dir),
        }
    }
}

/// Dataset id used in reports: the file stem of the CSV path.
pub fn dataset_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}
