//! Bias-corrected Adam with per-group freeze masks.
//!
//! Moments exist for every parameterized layer from construction; a frozen
//! layer's moments are retained untouched rather than reset, so the state
//! stays shape-aligned with the parameters for the whole run.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::params::{FreezeMask, GradMap, ParamSet};
use crate::tensor::TensorBuffer;

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m_weight: TensorBuffer,
    pub v_weight: TensorBuffer,
    pub m_bias: TensorBuffer,
    pub v_bias: TensorBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: BTreeMap<String, Moments>,
}

impl OptimizerState {
    /// Fresh zero-moment state shaped after `params`, with standard defaults
    /// `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(params: &ParamSet, learning_rate: f64) -> Self {
        let moments = params
            .layers()
            .iter()
            .map(|l| {
                (
                    l.id.clone(),
                    Moments {
                        m_weight: TensorBuffer::zeros(l.weight.shape()),
                        v_weight: TensorBuffer::zeros(l.weight.shape()),
                        m_bias: TensorBuffer::zeros(l.bias.shape()),
                        v_bias: TensorBuffer::zeros(l.bias.shape()),
                    },
                )
            })
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments,
        }
    }

    pub fn moments(&self, id: &str) -> Option<&Moments> {
        self.moments.get(id)
    }
}

/// One Adam update over the supplied gradients.
///
/// Gradient keys must be a subset of the unfrozen parameterized layers;
/// a gradient for a frozen layer is a contract violation. Frozen tensors
/// and their moments are bit-identical before and after.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &GradMap,
    opt: &mut OptimizerState,
    mask: &FreezeMask,
) -> Result<()> {
    for (id, g) in grads {
        let layer = params
            .get(id)
            .ok_or_else(|| Error::Contract(format!("gradient for unknown layer `{id}`")))?;
        if mask.is_frozen(layer.group) {
            return Err(Error::Contract(format!(
                "gradient supplied for frozen layer `{id}`"
            )));
        }
        layer.weight.ensure_same_shape(&g.weight)?;
        layer.bias.ensure_same_shape(&g.bias)?;
    }

    opt.step += 1;
    let t = opt.step as i32;
    let bias1 = 1.0 - opt.beta1.powi(t);
    let bias2 = 1.0 - opt.beta2.powi(t);
    let (b1, b2, lr, eps) = (opt.beta1, opt.beta2, opt.learning_rate, opt.epsilon);

    for (id, g) in grads {
        let moments = opt.moments.get_mut(id).expect("moments exist per layer");
        let layer = params.get_mut(id).unwrap();
        for (param, grad, m, v) in [
            (&mut layer.weight, &g.weight, &mut moments.m_weight, &mut moments.v_weight),
            (&mut layer.bias, &g.bias, &mut moments.m_bias, &mut moments.v_bias),
        ] {
            let pd = param.data_mut();
            let gd = grad.data();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
                vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
                let m_hat = md[i] / bias1;
                let v_hat = vd[i] / bias2;
                pd[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        layer.weight.ensure_finite("adam weight update")?;
        layer.bias.ensure_finite("adam bias update")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{build_model, LayerGrads};
    use crate::nn::presets;
    use crate::nn::spec::{Group, GroupSel};

    fn toy() -> (crate::nn::spec::ModelConfig, ParamSet) {
        let cfg = presets::preset("unet_concat", 16, 77).unwrap();
        let params = build_model(&cfg).unwrap();
        (cfg, params)
    }

    #[test]
    fn zero_gradients_leave_params_unchanged_but_advance_step() {
        let (_, mut params) = toy();
        let before = params.clone();
        let mut opt = OptimizerState::new(&params, 0.1);
        let grads: GradMap = params
            .layers()
            .iter()
            .map(|l| {
                (
                    l.id.clone(),
                    LayerGrads {
                        weight: TensorBuffer::zeros(l.weight.shape()),
                        bias: TensorBuffer::zeros(l.bias.shape()),
                    },
                )
            })
            .collect();
        adam_step(&mut params, &grads, &mut opt, &FreezeMask::none()).unwrap();
        assert_eq!(params, before);
        assert_eq!(opt.step, 1);
    }

    // hand evaluation of the first bias-corrected step: with m_hat = g and
    // v_hat = g^2, the update is lr * g / (|g| + eps), so w: 1 -> ~0.9
    #[test]
    fn first_step_moves_scalar_by_learning_rate() {
        let (_, mut params) = toy();
        let id = params.layers()[0].id.clone();
        params.get_mut(&id).unwrap().weight.data_mut()[0] = 1.0;
        let mut opt = OptimizerState::new(&params, 0.1);
        let mut grads = GradMap::new();
        let l = params.get(&id).unwrap();
        let mut gw = TensorBuffer::zeros(l.weight.shape());
        gw.data_mut()[0] = 1.0;
        grads.insert(
            id.clone(),
            LayerGrads {
                weight: gw,
                bias: TensorBuffer::zeros(l.bias.shape()),
            },
        );
        adam_step(&mut params, &grads, &mut opt, &FreezeMask::none()).unwrap();
        let w = params.get(&id).unwrap().weight.data()[0];
        let expected = 1.0 - 0.1 * 1.0 / (1.0f64.sqrt() + 1e-8);
        assert!((w - expected).abs() < 1e-12, "w = {w}, expected {expected}");
        assert!((w - 0.9).abs() < 1e-8);
    }

    #[test]
    fn gradient_for_frozen_layer_is_contract_violation() {
        let (_, mut params) = toy();
        let enc_id = params.ids(GroupSel::Encoder).next().unwrap().to_string();
        let mut opt = OptimizerState::new(&params, 0.1);
        let l = params.get(&enc_id).unwrap();
        let grads: GradMap = [(
            enc_id.clone(),
            LayerGrads {
                weight: TensorBuffer::filled(l.weight.shape(), 1.0),
                bias: TensorBuffer::zeros(l.bias.shape()),
            },
        )]
        .into();
        let err = adam_step(&mut params, &grads, &mut opt, &FreezeMask::encoder_frozen());
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn frozen_encoder_is_bit_identical_over_many_steps() {
        let (_, mut params) = toy();
        let initial = params.clone();
        let mut opt = OptimizerState::new(&params, 0.05);
        let mask = FreezeMask::encoder_frozen();
        let decoder_ids: Vec<String> =
            params.ids(GroupSel::Decoder).map(str::to_string).collect();
        for step in 0..10u64 {
            let grads: GradMap = decoder_ids
                .iter()
                .map(|id| {
                    let l = params.get(id).unwrap();
                    (
                        id.clone(),
                        LayerGrads {
                            weight: TensorBuffer::filled(l.weight.shape(), 0.3 + step as f64),
                            bias: TensorBuffer::filled(l.bias.shape(), -0.1),
                        },
                    )
                })
                .collect();
            adam_step(&mut params, &grads, &mut opt, &mask).unwrap();
        }
        for l in params.layers() {
            match l.group {
                Group::Encoder => assert_eq!(
                    (l, initial.get(&l.id).unwrap()).0,
                    initial.get(&l.id).unwrap(),
                    "frozen encoder tensor changed"
                ),
                Group::Decoder => assert_ne!(l, initial.get(&l.id).unwrap()),
            }
        }
        assert_eq!(opt.step, 10);
    }
}
