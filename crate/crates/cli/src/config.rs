//! Optional TOML run configuration. Command-line flags take precedence over
//! values set here, which take precedence over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skelattack::attack::{AbTarget, LossPreset, StrategySpec};
use skelattack::datagen::DatasetSpec;
use skelattack::models::TrainConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Dataset directory used when a command gets no `--data`.
    pub data: Option<PathBuf>,
    pub dataset: Option<DatasetSpec>,
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub attack: AttackSection,
}

/// Attack overrides; anything left out keeps the preset's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub strategy: Option<StrategySpec>,
    pub preset: Option<LossPreset>,
    pub lr: Option<f64>,
    pub max_iters: Option<usize>,
    pub w: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<[f64; 5]>,
    pub ab_target: Option<AbTarget>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // relative paths are relative to the config file
        if let Some(d) = &cfg.data {
            if d.is_relative() {
                cfg.data = Some(path.parent().unwrap_or(Path::new(".")).join(d));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.data {
            if !d.is_dir() {
                bail!("config data directory {} does not exist", d.display());
            }
        }
        if self.jobs == Some(0) {
            bail!("jobs must be >= 1");
        }
        if let Some(spec) = &self.dataset {
            spec.validate()?;
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }
}

/// Reads a dataset spec as JSON (`.json`) or TOML (anything else).
pub fn load_dataset_spec(path: &Path) -> Result<DatasetSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading spec {}", path.display()))?;
    let spec: DatasetSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing spec {}", path.display()))?
    };
    spec.validate()?;
    Ok(spec)
}
