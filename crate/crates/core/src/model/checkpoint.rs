//! JSON checkpoint container.
//!
//! Layout: `{"format": "mcwf-checkpoint", "version": 1, "config": TrainConfig,
//! "state": TrainState}`. Parameter tensors carry their name, shape and
//! row-major `f64` data; floats are written in shortest round-trip form so a
//! save/load cycle is bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{TrainConfig, TrainState};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "mcwf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, state: TrainState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            state,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        if !self.state.params.is_finite() {
            return Err(Error::NonFiniteInput("checkpoint parameters".into()));
        }
        serde_json::to_string(self).map_err(|e| Error::InvalidConfig(format!("checkpoint encode: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("checkpoint decode: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        ck.config.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = self.to_json().map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
