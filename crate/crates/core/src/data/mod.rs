//! Deterministic synthetic multi-centre data: paired source/target image
//! silos with per-silo corruption, plus the preprocessing and augmentation
//! pipeline.
//!
//! Every subject is a random multi-ellipse phantom. The source view applies
//! silo-specific intensity gain, a smooth multiplicative bias field, and
//! Gaussian noise; the target view is a fixed nonlinear intensity remap of
//! the clean phantom, shared across silos, so the translation task is
//! learnable federation-wide while source domains stay heterogeneous.

mod io;
mod pipeline;
mod synth;

pub use io::{export_silo, import_silo, read_silo_file, write_silo_file};
pub use pipeline::{apply_transform, augment, draw_transform, preprocess, Transform};
pub use synth::generate_silo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorBuffer;

/// Per-silo synthetic-data recipe; the parameters encode inter-client
/// heterogeneity in resolution, intensity, and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiloConfig {
    pub silo_id: String,
    pub n_subjects: usize,
    /// `(height, width)` of the native images.
    pub native_size: (usize, usize),
    pub intensity_gain: f64,
    pub bias_field_strength: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SiloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.native_size.0 < 16 || self.native_size.1 < 16 {
            return Err(Error::Config(format!(
                "silo `{}`: native_size must be at least 16x16",
                self.silo_id
            )));
        }
        if self.n_subjects < 2 {
            return Err(Error::Config(format!(
                "silo `{}`: n_subjects must be at least 2",
                self.silo_id
            )));
        }
        if self.bias_field_strength < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "silo `{}`: corruption strengths must be non-negative",
                self.silo_id
            )));
        }
        Ok(())
    }
}

/// One source/target image pair. After [`preprocess`] both images share the
/// same spatial size and live in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub source: TensorBuffer,
    pub target: TensorBuffer,
    pub subject_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub max_rotation_deg: f64,
    pub max_translation_px: usize,
    pub allow_flip: bool,
}

impl AugmentSpec {
    pub fn validate(&self, image_width: usize) -> Result<()> {
        if !(0.0..=45.0).contains(&self.max_rotation_deg) {
            return Err(Error::Config(
                "max_rotation_deg must be within [0, 45]".into(),
            ));
        }
        if self.max_translation_px >= image_width / 4 {
            return Err(Error::Config(
                "max_translation_px must be below a quarter of the image width".into(),
            ));
        }
        Ok(())
    }
}

/// The four default training centres; heterogeneous in resolution, gain,
/// bias-field strength, and noise.
pub fn default_training_silos() -> Vec<SiloConfig> {
    vec![
        SiloConfig {
            silo_id: "centre_a".into(),
            n_subjects: 12,
            native_size: (40, 40),
            intensity_gain: 0.85,
            bias_field_strength: 0.10,
            noise_sigma: 0.020,
            seed: 101,
        },
        SiloConfig {
            silo_id: "centre_b".into(),
            n_subjects: 12,
            native_size: (36, 48),
            intensity_gain: 1.00,
            bias_field_strength: 0.20,
            noise_sigma: 0.010,
            seed: 202,
        },
        SiloConfig {
            silo_id: "centre_c".into(),
            n_subjects: 12,
            native_size: (32, 32),
            intensity_gain: 1.20,
            bias_field_strength: 0.05,
            noise_sigma: 0.030,
            seed: 303,
        },
        SiloConfig {
            silo_id: "centre_d".into(),
            n_subjects: 12,
            native_size: (48, 36),
            intensity_gain: 0.95,
            bias_field_strength: 0.15,
            noise_sigma: 0.015,
            seed: 404,
        },
    ]
}

/// The held-out evaluation centre, never part of training.
pub fn default_eval_silo() -> SiloConfig {
    SiloConfig {
        silo_id: "centre_e".into(),
        n_subjects: 8,
        native_size: (40, 40),
        intensity_gain: 1.05,
        bias_field_strength: 0.12,
        noise_sigma: 0.018,
        seed: 505,
    }
}
