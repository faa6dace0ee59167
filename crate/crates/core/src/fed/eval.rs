//! Held-out evaluation of a trained model on paired samples.

use serde::{Deserialize, Serialize};

use crate::data::PairedSample;
use crate::error::Result;
use crate::exec::Execution;
use crate::metrics::{image_metrics, ImageMetrics};
use crate::nn::{forward, ModelConfig, ParamSet};
use crate::tensor::TensorBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub subject_id: u32,
    pub metrics: ImageMetrics,
}

/// Runs the model case by case and scores each prediction against its
/// target. Predictions are clamped to `[0, 1]` before scoring, matching the
/// normalized target domain.
pub fn evaluate_cases(
    model: &ModelConfig,
    params: &ParamSet,
    samples: &[PairedSample],
    exec: Execution,
) -> Result<Vec<CaseMetrics>> {
    let results: Vec<Result<CaseMetrics>> = exec.map(samples, |sample| {
        let (h, w) = (sample.source.shape()[0], sample.source.shape()[1]);
        let batch = TensorBuffer::new(vec![1, 1, h, w], sample.source.data().to_vec())?;
        let (prediction, _) = forward(model, params, &batch)?;
        let image = TensorBuffer::new(
            vec![h, w],
            prediction.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )?;
        Ok(CaseMetrics {
            subject_id: sample.subject_id,
            metrics: image_metrics(&image, &sample.target)?,
        })
    });
    results.into_iter().collect()
}
