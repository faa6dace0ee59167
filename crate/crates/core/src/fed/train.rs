//! One client's local training pass for a single round.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{augment, PairedSample};
use crate::error::{Error, Result};
use crate::fed::{ClientState, TrainConfig};
use crate::metrics::{flops_for, CostModel, LedgerEntry};
use crate::nn::{
    add_prox_grads, adam_step, backward, derive_round_seed, forward, loss_and_grad, ModelConfig,
    ParamSet, ProxTerm,
};
use crate::tensor::TensorBuffer;

/// Stacks samples into `(B, 1, H, W)` source and target tensors.
fn stack_batch(samples: &[PairedSample]) -> Result<(TensorBuffer, TensorBuffer)> {
    let shape = samples[0].source.shape();
    let (h, w) = (shape[0], shape[1]);
    let b = samples.len();
    let mut source = TensorBuffer::zeros(&[b, 1, h, w]);
    let mut target = TensorBuffer::zeros(&[b, 1, h, w]);
    for (i, s) in samples.iter().enumerate() {
        if s.source.shape() != shape || s.target.shape() != shape {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: s.source.shape().to_vec(),
            });
        }
        let plane = h * w;
        source.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(s.source.data());
        target.data_mut()[i * plane..(i + 1) * plane].copy_from_slice(s.target.data());
    }
    Ok((source, target))
}

/// Runs `local_epochs` over the client's reshuffled dataset in minibatches,
/// optimizing MSE plus the FedProx proximal term anchored at the received
/// global parameters. Frozen groups receive no updates.
///
/// Returns the sample-weighted mean batch loss and a ledger entry with FLOP
/// counts, updated-parameter count, and wall time filled in; communication
/// bytes are the round loop's responsibility.
pub fn local_train(
    client: &mut ClientState,
    anchor: &ParamSet,
    model: &ModelConfig,
    cfg: &TrainConfig,
    round: u32,
    cost: &CostModel,
) -> Result<(f64, LedgerEntry)> {
    if client.dataset.is_empty() {
        return Err(Error::Empty("client dataset"));
    }
    client.params.ensure_same_partition(anchor)?;
    let started = Instant::now();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_round_seed(cfg.seed, client.client_id as u64, round as u64));

    let mut entry = LedgerEntry::default();
    let mut loss_sum = 0.0;
    let mut n_seen = 0usize;
    for _ in 0..cfg.local_epochs {
        let mut order: Vec<usize> = (0..client.dataset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_samples: Vec<PairedSample> = match &client.augment {
                None => chunk.iter().map(|&i| client.dataset[i].clone()).collect(),
                Some(spec) => chunk
                    .iter()
                    .map(|&i| augment(&client.dataset[i], spec, &mut rng))
                    .collect::<Result<_>>()?,
            };
            let (source, target) = stack_batch(&batch_samples)?;
            let (prediction, mut tape) = forward(model, &client.params, &source)?;
            let prox = (cfg.prox_mu > 0.0).then_some(ProxTerm {
                mu: cfg.prox_mu,
                anchor,
                mask: &client.freeze_mask,
            });
            let (loss, output_grad, prox_grads) =
                loss_and_grad(&prediction, &target, prox, &client.params)?;
            let mut grads = backward(
                model,
                &client.params,
                &mut tape,
                &output_grad,
                &client.freeze_mask,
            )?;
            add_prox_grads(&mut grads, &prox_grads)?;
            adam_step(&mut client.params, &grads, &mut client.opt_state, &client.freeze_mask)?;

            let flops = flops_for(model, chunk.len(), &client.freeze_mask);
            entry.flops_forward += flops.forward;
            entry.flops_backward += flops.backward;
            loss_sum += loss * chunk.len() as f64;
            n_seen += chunk.len();
        }
    }

    entry.params_updated = client.params.unfrozen_param_count(&client.freeze_mask);
    entry.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    entry.finalize_costs(cost);
    Ok((loss_sum / n_seen as f64, entry))
}
