//! JSON run configuration. Every field has a default, so a config file only
//! needs the values it changes; command-line flags override the file, and
//! `MCWF_SEED` overrides the file's master seed.

use std::path::{Path, PathBuf};

use mcwf_core::enhance::MwfConfig;
use mcwf_core::model::features::DEFAULT_DELTA;
use mcwf_core::model::optim::DEFAULT_LR;
use mcwf_core::model::train::DEFAULT_SEGMENT_FRAMES;
use mcwf_core::model::{LayerKind, ModelConfig, NormMode, TrainConfig};
use mcwf_core::objectives::ObjectiveConfig;
use mcwf_core::scene::SceneDefaults;
use mcwf_core::stft::StftConfig;
use mcwf_core::{seed, Error};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "MCWF_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
    pub context: usize,
    pub layer_kind: LayerKind,
    pub delta: f64,
    pub norm: NormMode,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            context: 2,
            layer_kind: LayerKind::Dense,
            delta: DEFAULT_DELTA,
            norm: NormMode::PerBin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub segment_frames: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            epochs: 30,
            batch_size: 4,
            segment_frames: DEFAULT_SEGMENT_FRAMES,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; scene, training and batch streams derive from it.
    pub seed: u64,
    pub ref_channel: usize,
    pub stft: StftConfig,
    pub scene: SceneDefaults,
    pub model: ModelSettings,
    pub objective: ObjectiveConfig,
    pub mwf: MwfConfig,
    pub optimizer: OptimizerSettings,
    pub paths: Paths,
}

impl RunConfig {
    /// Defaults, then `file`, then the seed environment variable.
    pub fn load(file: Option<&Path>) -> CliResult<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
                serde_json::from_str(&text).map_err(|e| CliError::Json {
                    path: path.to_path_buf(),
                    detail: e.to_string(),
                })?
            }
            None => RunConfig::default(),
        };
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.stft.validate()?;
        self.objective.validate()?;
        if self.scene.sample_rate != self.stft.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "scene rate {} Hz differs from STFT rate {} Hz",
                self.scene.sample_rate, self.stft.sample_rate
            ))
            .into());
        }
        self.scene.geometry.validate()?;
        if self.ref_channel >= self.scene.geometry.channels() {
            return Err(Error::InvalidConfig(format!("reference channel {}", self.ref_channel)).into());
        }
        Ok(())
    }

    pub fn scene_seed(&self) -> u64 {
        seed::derive(self.seed, "scene")
    }

    pub fn train_config(&self, channels: usize) -> CliResult<TrainConfig> {
        let m = &self.model;
        let cfg = TrainConfig {
            stft: self.stft,
            model: ModelConfig {
                bins: self.stft.num_bins(),
                channels,
                hidden: m.hidden.clone(),
                context: m.context,
                layer_kind: m.layer_kind,
                delta: m.delta,
                norm: m.norm,
            },
            objective: self.objective,
            mwf: self.mwf,
            lr: self.optimizer.lr,
            epochs: self.optimizer.epochs,
            batch_size: self.optimizer.batch_size,
            segment_frames: self.optimizer.segment_frames,
            ref_channel: self.ref_channel,
            seed: seed::derive(self.seed, "train"),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable") + "\n"
    }
}
