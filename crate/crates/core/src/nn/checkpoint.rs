//! Checkpoint files: JSON with a version, a config block and every parameter
//! as `{name, shape, data}` in canonical order. Values are stored as 64-bit
//! floats with shortest round-trip formatting, so reloading is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{GqaNet, NetConfig};
use super::tensor::Tensor;
use crate::error::{GqaError, Result};
use crate::patch::PatchConfig;
use crate::rng::Seed;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "gqanet-checkpoint";

/// Training stage a checkpoint was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Pretrained,
    Ranked,
    Finetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub net: NetConfig,
    pub patch: PatchConfig,
    pub uniform_weights: bool,
    pub no_patching: bool,
    /// Global seed of the run; fixes anchors, patches and the reference split.
    pub seed: u64,
    pub holdout_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    stage: Stage,
    config: CheckpointConfig,
    params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub stage: Stage,
    pub config: CheckpointConfig,
    pub net: GqaNet<T>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_json(&self) -> String {
        let params = self
            .net
            .params()
            .into_iter()
            .map(|(name, _, t)| ParamRecord {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            stage: self.stage,
            config: self.config.clone(),
            params,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| GqaError::Checkpoint(e.to_string()))?;
        if file.format != FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(GqaError::Checkpoint(format!("unsupported checkpoint {} v{}", file.format, file.version)));
        }
        let mut net = GqaNet::<T>::init(file.config.net, Seed(0));
        let slots = net.params_mut();
        if slots.len() != file.params.len() {
            return Err(GqaError::Checkpoint(format!("expected {} tensors, found {}", slots.len(), file.params.len())));
        }
        for ((name, _, slot), rec) in slots.into_iter().zip(file.params) {
            if name != rec.name || slot.shape() != rec.shape.as_slice() {
                return Err(GqaError::Checkpoint(format!("tensor {} {:?} does not match {name} {:?}", rec.name, rec.shape, slot.shape())));
            }
            *slot = Tensor::new(rec.shape, rec.data.into_iter().map(T::lit).collect())?;
            if !slot.is_finite() {
                return Err(GqaError::Checkpoint(format!("tensor {name} has non-finite values")));
            }
        }
        Ok(Checkpoint { stage: file.stage, config: file.config, net })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| GqaError::io(dir, e))?;
        }
        fs::write(path, self.to_json()).map_err(|e| GqaError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| GqaError::io(path, e))?;
        Self::from_json(&text)
    }
}
