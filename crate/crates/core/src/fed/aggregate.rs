//! Sample-size-weighted FedAvg over client parameter sets.

use crate::error::{Error, Result};
use crate::nn::{Group, ParamSet};
use crate::tensor::TensorBuffer;

/// Element-wise weighted mean with weights `n_k / sum(n)`, reduced in the
/// given (fixed client-id) order for bit-determinism.
///
/// When `frozen` is set, encoder tensors are excluded from aggregation:
/// every client holds the identical frozen encoder the server broadcast at
/// the freeze, so it is carried forward unchanged from the first client
/// rather than re-averaged (which would perturb the last bits).
pub fn aggregate_fedavg(
    client_params: &[&ParamSet],
    sample_counts: &[u64],
    frozen: bool,
) -> Result<ParamSet> {
    if client_params.is_empty() {
        return Err(Error::Empty("no client parameters to aggregate"));
    }
    if client_params.len() != sample_counts.len() {
        return Err(Error::Contract(
            "client parameter and sample count lists differ in length".into(),
        ));
    }
    if sample_counts.iter().any(|&n| n == 0) {
        return Err(Error::Contract("sample counts must be positive".into()));
    }
    let first = client_params[0];
    for other in &client_params[1..] {
        first.ensure_same_partition(other)?;
    }

    let total: u64 = sample_counts.iter().sum();
    let mut result = first.clone();
    for layer in result.layers_mut() {
        if frozen && layer.group == Group::Encoder {
            debug_assert!(
                client_params
                    .iter()
                    .all(|p| p.get(&layer.id).unwrap().weight == layer.weight),
                "frozen encoders must be bit-identical across clients"
            );
            continue; // carried forward from the first client
        }
        layer.weight = TensorBuffer::zeros(layer.weight.shape());
        layer.bias = TensorBuffer::zeros(layer.bias.shape());
        for (params, &count) in client_params.iter().zip(sample_counts) {
            let weight = count as f64 / total as f64;
            let src = params.get(&layer.id).unwrap();
            layer.weight.add_scaled(&src.weight, weight)?;
            layer.bias.add_scaled(&src.bias, weight)?;
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, presets};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params_with_value(v: f64) -> ParamSet {
        let mut p = build_model(&presets::preset("unet_concat", 16, 0).unwrap()).unwrap();
        for l in p.layers_mut() {
            l.weight = TensorBuffer::filled(l.weight.shape(), v);
            l.bias = TensorBuffer::filled(l.bias.shape(), v);
        }
        p
    }

    #[test]
    fn single_client_passes_through_bit_exactly() {
        let p = build_model(&presets::preset("unet_concat", 16, 3).unwrap()).unwrap();
        let out = aggregate_fedavg(&[&p], &[12], false).unwrap();
        assert_eq!(out, p, "weight 12/12 must be exactly 1.0");
    }

    #[test]
    fn equal_counts_give_plain_mean() {
        let a = params_with_value(0.0);
        let b = params_with_value(4.0);
        let out = aggregate_fedavg(&[&a, &b], &[2, 2], false).unwrap();
        for l in out.layers() {
            assert!(l.weight.data().iter().all(|&v| v == 2.0));
        }
    }

    #[test]
    fn weighted_counts_match_hand_value() {
        // counts (1, 3), values (1, 3): 0.25 * 1 + 0.75 * 3 = 2.5
        let a = params_with_value(1.0);
        let b = params_with_value(3.0);
        let out = aggregate_fedavg(&[&a, &b], &[1, 3], false).unwrap();
        for l in out.layers() {
            assert!(l.weight.data().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        }
    }

    #[test]
    fn frozen_mode_keeps_encoder_and_averages_decoder() {
        let base = params_with_value(1.0);
        let mut moved = base.clone();
        for l in moved.layers_mut() {
            if l.group == Group::Decoder {
                l.weight = TensorBuffer::filled(l.weight.shape(), 5.0);
                l.bias = TensorBuffer::filled(l.bias.shape(), 5.0);
            }
        }
        let out = aggregate_fedavg(&[&base, &moved], &[1, 1], true).unwrap();
        for l in out.layers() {
            let expected = match l.group {
                Group::Encoder => 1.0,
                Group::Decoder => 3.0,
            };
            assert!(l.weight.data().iter().all(|&v| (v - expected).abs() < 1e-15));
        }
    }

    #[test]
    fn partition_mismatch_is_rejected() {
        let a = build_model(&presets::preset("unet_concat", 16, 0).unwrap()).unwrap();
        let b = build_model(&presets::preset("light_leaky", 16, 0).unwrap()).unwrap();
        assert!(aggregate_fedavg(&[&a, &b], &[1, 1], false).is_err());
        assert!(aggregate_fedavg(&[], &[], false).is_err());
        assert!(aggregate_fedavg(&[&a], &[0], false).is_err());
    }

    proptest! {
        // brute-force per-element weighted-sum oracle on random small sets
        #[test]
        fn matches_brute_force_oracle(seed in any::<u64>(), k in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sets = Vec::new();
            let mut counts = Vec::new();
            for _ in 0..k {
                let mut p = build_model(&presets::preset("light_leaky", 16, 0).unwrap()).unwrap();
                for l in p.layers_mut() {
                    for v in l.weight.data_mut() {
                        *v = rng.random_range(-2.0..2.0);
                    }
                    for v in l.bias.data_mut() {
                        *v = rng.random_range(-2.0..2.0);
                    }
                }
                sets.push(p);
                counts.push(rng.random_range(1u64..20));
            }
            let refs: Vec<&ParamSet> = sets.iter().collect();
            let out = aggregate_fedavg(&refs, &counts, false).unwrap();
            let total: u64 = counts.iter().sum();
            for l in out.layers() {
                for (i, &got) in l.weight.data().iter().enumerate() {
                    let mut expected = 0.0;
                    for (p, &n) in sets.iter().zip(&counts) {
                        expected += p.get(&l.id).unwrap().weight.data()[i] * n as f64
                            / total as f64;
                    }
                    prop_assert!((got - expected).abs() < 1e-12);
                }
            }
            // permuting clients changes nothing beyond rounding
            let mut order: Vec<usize> = (0..k).collect();
            order.reverse();
            let perm_refs: Vec<&ParamSet> = order.iter().map(|&i| &sets[i]).collect();
            let perm_counts: Vec<u64> = order.iter().map(|&i| counts[i]).collect();
            let permuted = aggregate_fedavg(&perm_refs, &perm_counts, false).unwrap();
            for (a, b) in out.layers().iter().zip(permuted.layers()) {
                for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
