use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distort::{DistortionType, STANDARD_LEVELS};
use crate::error::{GqaError, Result};
use crate::metrics::MetricId;
use crate::nn::NetConfig;
use crate::patch::PatchConfig;
use crate::train::{AdamConfig, Batching, LrSchedule, PatchMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = GqaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(GqaError::Config(format!("unknown profile {s:?} (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Everything a pipeline run needs besides the manifest and the global seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub levels: usize,
    pub dtypes: Vec<DistortionType>,
    pub metrics: Vec<MetricId>,
    /// Fraction of references held out for testing.
    pub holdout_fraction: f64,
    pub uniform_weights: bool,
    pub no_patching: bool,
    pub patch: PatchConfig,
    pub net: NetConfig,
    pub pretrain: TrainConfig,
    pub pretrain_batching: Batching,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
}

fn stage(epochs: usize, lr: f64, batch_size: usize) -> TrainConfig {
    TrainConfig { epochs, adam: AdamConfig { lr, ..AdamConfig::default() }, batch_size, seed: 0, schedule: LrSchedule::Constant }
}

impl ExperimentConfig {
    /// Small, CPU-friendly settings for the synthetic desk dataset.
    pub fn desk() -> Self {
        ExperimentConfig {
            levels: STANDARD_LEVELS,
            dtypes: vec![DistortionType::Gn, DistortionType::Un, DistortionType::Rd, DistortionType::Gd],
            metrics: MetricId::ALL.to_vec(),
            holdout_fraction: 0.2,
            uniform_weights: false,
            no_patching: false,
            patch: PatchConfig { count: 64, radius: 0.2, points: 128 },
            net: NetConfig::default(),
            // single-cloud batches never leave chance level on a handful of references
            pretrain: TrainConfig { schedule: LrSchedule::Cosine, ..stage(10, 3e-3, 32) },
            pretrain_batching: Batching::Patches,
            // listMLE is scale-free and leaves scores in the hundreds; the first few
            // hundred fine-tuning epochs only shrink them
            train: stage(200, 3e-4, 1),
            finetune: stage(800, 1e-2, 8),
        }
    }

    /// The published training setup.
    pub fn paper() -> Self {
        ExperimentConfig {
            holdout_fraction: 0.1,
            patch: PatchConfig::default(),
            pretrain: stage(240, 1e-3, 1),
            pretrain_batching: Batching::Cloud,
            train: stage(800, 1e-4, 1),
            finetune: stage(100, 1e-4, 8),
            ..Self::desk()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Profile defaults overridden by the keys present in a TOML document.
    pub fn from_toml(text: &str, base: Profile) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| GqaError::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Self::profile(base)).map_err(|e| GqaError::Config(e.to_string()))?;
        merge(&mut merged, overrides);
        let cfg: ExperimentConfig = merged.try_into().map_err(|e: toml::de::Error| GqaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GqaError::io(path, e))?;
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.patch.validate()?;
        for t in [&self.pretrain, &self.train, &self.finetune] {
            t.validate()?;
        }
        if self.net.k == 0 || !(self.net.slope >= 0.0 && self.net.slope < 1.0) {
            return Err(GqaError::Config(format!("invalid network config {:?}", self.net)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(GqaError::Config(format!("holdout_fraction {} outside [0, 1)", self.holdout_fraction)));
        }
        if self.levels == 0 {
            return Err(GqaError::Config("levels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn patch_mode(&self) -> PatchMode {
        PatchMode { config: self.patch, no_patching: self.no_patching }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
