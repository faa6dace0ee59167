//! Training loss: pixel-wise MSE plus an optional proximal anchor term.
//!
//! The proximal term is `(mu/2) * sum ||w - w_anchor||^2` over unfrozen
//! parameters only, with per-parameter gradient `mu * (w - w_anchor)`;
//! frozen parameters never deviate from the anchor they were frozen at, so
//! excluding them keeps the term finite-difference-consistent.

use crate::error::{Error, Result};
use crate::nn::params::{FreezeMask, GradMap, LayerGrads, ParamSet};
use crate::tensor::TensorBuffer;

/// Proximal anchor configuration for one local training pass.
#[derive(Debug, Clone, Copy)]
pub struct ProxTerm<'a> {
    pub mu: f64,
    pub anchor: &'a ParamSet,
    pub mask: &'a FreezeMask,
}

/// Mean-squared-error loss with optional proximal term.
///
/// Returns `(loss, d_loss/d_prediction, proximal gradients per layer)`.
/// The output gradient is `2 (pred - target) / n_pixels`; proximal
/// gradients are empty when `prox` is absent or `mu == 0`.
pub fn loss_and_grad(
    prediction: &TensorBuffer,
    target: &TensorBuffer,
    prox: Option<ProxTerm<'_>>,
    params: &ParamSet,
) -> Result<(f64, TensorBuffer, GradMap)> {
    prediction.ensure_same_shape(target)?;
    let n = prediction.len() as f64;
    let mut loss = 0.0;
    for (p, t) in prediction.data().iter().zip(target.data()) {
        let d = p - t;
        loss += d * d;
    }
    loss /= n;
    let output_grad = prediction.zip_map(target, |p, t| 2.0 * (p - t) / n)?;

    let mut prox_grads = GradMap::new();
    if let Some(ProxTerm { mu, anchor, mask }) = prox {
        if mu < 0.0 {
            return Err(Error::Contract("proximal mu must be non-negative".into()));
        }
        params.ensure_same_partition(anchor)?;
        if mu > 0.0 {
            let mut penalty = 0.0;
            for layer in params.layers() {
                if mask.is_frozen(layer.group) {
                    continue;
                }
                let a = anchor.get(&layer.id).unwrap();
                let mut sq = 0.0;
                for (w, wa) in layer.weight.data().iter().zip(a.weight.data()) {
                    sq += (w - wa) * (w - wa);
                }
                for (b, ba) in layer.bias.data().iter().zip(a.bias.data()) {
                    sq += (b - ba) * (b - ba);
                }
                penalty += sq;
                prox_grads.insert(
                    layer.id.clone(),
                    LayerGrads {
                        weight: layer.weight.zip_map(&a.weight, |w, wa| mu * (w - wa))?,
                        bias: layer.bias.zip_map(&a.bias, |b, ba| mu * (b - ba))?,
                    },
                );
            }
            loss += 0.5 * mu * penalty;
        }
    }

    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok((loss, output_grad, prox_grads))
}

/// Merges proximal gradients into data gradients in place.
pub fn add_prox_grads(data_grads: &mut GradMap, prox_grads: &GradMap) -> Result<()> {
    for (id, pg) in prox_grads {
        match data_grads.get_mut(id) {
            Some(dg) => {
                dg.weight.add_scaled(&pg.weight, 1.0)?;
                dg.bias.add_scaled(&pg.bias, 1.0)?;
            }
            None => {
                data_grads.insert(id.clone(), pg.clone());
            }
        }
    }
    Ok(())
}
