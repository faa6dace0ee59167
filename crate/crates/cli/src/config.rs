//! TOML experiment configuration.
//!
//! Unknown keys are rejected outright: a typoed hyperparameter silently
//! falling back to a default would poison a whole experiment sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fedfreeze_core::data::SiloConfig;
use fedfreeze_core::fed::TrainConfig;
use fedfreeze_core::freeze::FreezeMode;
use fedfreeze_core::nn::{presets, ModelConfig};

use crate::CliError;

pub const DEFAULT_IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name, optionally with an image side: `unet_concat` or
    /// `unet_concat:16`.
    pub model: String,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    pub freezing: FreezingConfig,
    pub silos: Vec<SiloConfig>,
    pub eval_silo: SiloConfig,
}

fn default_repetitions() -> u32 {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezingModeName {
    Off,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezingConfig {
    pub mode: FreezingModeName,
    /// Defaults to `train.tau` when adaptive.
    pub tau: Option<f64>,
    /// Defaults to `train.patience` when adaptive.
    pub patience: Option<u32>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config `{}`: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        if self.repetitions == 0 {
            return Err(CliError::Config("repetitions must be at least 1".into()));
        }
        if self.silos.is_empty() {
            return Err(CliError::Config("at least one training silo is required".into()));
        }
        if self.silos.len() != self.train.num_clients {
            return Err(CliError::Config(format!(
                "train.num_clients is {} but {} silos are configured",
                self.train.num_clients,
                self.silos.len()
            )));
        }
        for (i, silo) in self.silos.iter().enumerate() {
            silo.validate()
                .map_err(|e| CliError::Config(format!("silos[{i}]: {e}")))?;
            if self.silos[..i].iter().any(|s| s.silo_id == silo.silo_id) {
                return Err(CliError::Config(format!(
                    "silos[{i}]: duplicate silo_id `{}`",
                    silo.silo_id
                )));
            }
        }
        self.eval_silo
            .validate()
            .map_err(|e| CliError::Config(format!("eval_silo: {e}")))?;
        if self.silos.iter().any(|s| s.silo_id == self.eval_silo.silo_id) {
            return Err(CliError::Config(format!(
                "eval_silo id `{}` collides with a training silo",
                self.eval_silo.silo_id
            )));
        }
        if let FreezingConfig {
            mode: FreezingModeName::Adaptive,
            tau: Some(tau),
            ..
        } = self.freezing
        {
            if !(tau > 0.0 && tau < 100.0) {
                return Err(CliError::Config("freezing.tau must be in (0, 100)".into()));
            }
        }
        let (name, side) = self.model_name_and_side()?;
        presets::preset(&name, side, 0)
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(())
    }

    fn model_name_and_side(&self) -> Result<(String, usize), CliError> {
        match self.model.split_once(':') {
            None => Ok((self.model.clone(), DEFAULT_IMAGE_SIDE)),
            Some((name, side)) => {
                let side: usize = side.parse().map_err(|_| {
                    CliError::Config(format!("model `{}`: side must be an integer", self.model))
                })?;
                Ok((name.to_string(), side))
            }
        }
    }

    /// Preset name without the optional side suffix.
    pub fn preset_name(&self) -> String {
        match self.model.split_once(':') {
            None => self.model.clone(),
            Some((name, _)) => name.to_string(),
        }
    }

    /// Builds the model description for one repetition's seed.
    pub fn build_model(&self, seed: u64) -> Result<ModelConfig, CliError> {
        let (name, side) = self.model_name_and_side()?;
        presets::preset(&name, side, seed).map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn freeze_mode(&self) -> FreezeMode {
        match self.freezing.mode {
            FreezingModeName::Off => FreezeMode::Off,
            FreezingModeName::Adaptive => FreezeMode::Adaptive {
                tau: self.freezing.tau.unwrap_or(self.train.tau),
                patience: self.freezing.patience.unwrap_or(self.train.patience),
            },
        }
    }

    pub fn mode_label(&self) -> &'static str {
        match self.freezing.mode {
            FreezingModeName::Off => "off",
            FreezingModeName::Adaptive => "adaptive",
        }
    }
}

/// The default 4-training-centre + held-out-centre experiment; the shipped
/// starter configs under `configs/` are this with `mode` flipped.
pub fn default_config(output_dir: PathBuf, adaptive: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: presets::DEFAULT_PRESET.to_string(),
        repetitions: 5,
        output_dir,
        train: TrainConfig::default(),
        freezing: FreezingConfig {
            mode: if adaptive {
                FreezingModeName::Adaptive
            } else {
                FreezingModeName::Off
            },
            tau: Some(5.0),
            patience: Some(3),
        },
        silos: fedfreeze_core::data::default_training_silos(),
        eval_silo: fedfreeze_core::data::default_eval_silo(),
    }
}
