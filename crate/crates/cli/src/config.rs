//! On-disk configuration formats for the CLI.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sporal_core::data::SplitSpec;
use sporal_core::ensemble::EnsembleSpec;
use sporal_core::rng::fnv1a64;
use sporal_core::training::{MetricMode, TrainConfig};
use sporal_core::{Error, Result};

/// Everything one training run needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Dataset manifest path (relative paths resolve against this file).
    pub dataset: PathBuf,
    pub split: SplitSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub metric: MetricMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

/// Which split a command evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Validation,
    #[default]
    Test,
}

/// Model source for `eval`: flat checkpoints or a bagged ensemble over
/// run directories.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSource {
    Checkpoints(Vec<CheckpointRef>),
    Ensemble {
        spec: EnsembleSpec,
        /// run id -> run directory (as written by `train`).
        runs: Vec<(String, PathBuf)>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub path: PathBuf,
    #[serde(default = "default_variant")]
    pub variant: sporal_core::training::VariantSpec,
}

fn default_variant() -> sporal_core::training::VariantSpec {
    sporal_core::training::VariantSpec::Standard
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub dataset: PathBuf,
    pub split: SplitSpec,
    #[serde(default)]
    pub eval_split: EvalSplit,
    #[serde(default)]
    pub metric: MetricMode,
    pub source: EvalSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Stable fingerprint of a resolved train config, stored in snapshot
/// sidecars so mismatched evaluations are detectable.
pub fn config_hash(config: &TrainConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

/// Per-epoch snapshot sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub epoch: usize,
    pub val_score: f64,
    pub train_loss: f64,
    pub config_hash: String,
}
