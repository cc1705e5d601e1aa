//! TOML run configuration: one file, one optional section per subcommand.
//! Command-line flags override file values; `COEVOLVE_OUT_DIR` overrides the
//! output directory (flags still win).

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const OUT_DIR_ENV: &str = "COEVOLVE_OUT_DIR";

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Seed for every random draw of the run.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub simulate: Option<SimulateSection>,
    pub train: Option<TrainSection>,
    pub evaluate: Option<EvaluateSection>,
    pub predict: Option<PredictSection>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub users: Option<usize>,
    pub items: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub context_dim: Option<usize>,
    /// "none" or "gaussian".
    pub context_mode: Option<String>,
    /// Observation window end, hours.
    pub horizon: Option<f64>,
    pub max_events: Option<usize>,
    pub activation: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub events: Option<PathBuf>,
    pub users: Option<usize>,
    pub items: Option<usize>,
    /// Train on the events up to `horizon * proportion` (whole log when
    /// absent).
    pub proportion: Option<f64>,
    pub window_size: Option<usize>,
    /// Survival dimensions sampled per window; omit for five times the
    /// window's distinct event dimensions.
    pub nce_samples: Option<usize>,
    pub scale_survival: Option<bool>,
    pub learning_rate: Option<f64>,
    pub clip_norm: Option<f64>,
    pub epochs: Option<usize>,
    pub embedding_dim: Option<usize>,
    pub activation: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub events: Option<PathBuf>,
    pub users: Option<usize>,
    pub items: Option<usize>,
    /// Evaluate a fixed checkpoint; when absent, a model is trained per
    /// split with the `[train]` hyperparameters.
    pub checkpoint: Option<PathBuf>,
    pub proportions: Option<Vec<f64>>,
    pub dump_details: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub events: Option<PathBuf>,
    pub users: Option<usize>,
    pub items: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub user: Option<usize>,
    /// Query time, hours.
    pub time: Option<f64>,
    /// Ranking depth to print and write.
    pub top: Option<usize>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::config(format!("cannot parse config {}: {e}", path.display())))
}

/// Output directory precedence: flag, then environment, then file, then
/// `./out`.
pub fn resolve_output_dir(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or(file)
        .unwrap_or_else(|| PathBuf::from("out"))
}
