//! Parameter storage, group partition, freeze masks, and the checkpoint
//! wire format.
//!
//! The binary format is the unit of communication accounting: a client
//! uplink is `encode_group(All)` before the freeze and `encode_group(Decoder)`
//! after it, so `encoded_size` must stay byte-exact with `encode_group`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::spec::{Group, GroupSel, ModelConfig};
use crate::tensor::TensorBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub id: String,
    pub group: Group,
    pub weight: TensorBuffer,
    pub bias: TensorBuffer,
}

/// Parameter tensors of every parameterized layer, in topology order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreezeMask {
    pub encoder: bool,
    pub decoder: bool,
}

impl FreezeMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn encoder_frozen() -> Self {
        Self {
            encoder: true,
            decoder: false,
        }
    }

    pub fn is_frozen(&self, group: Group) -> bool {
        match group {
            Group::Encoder => self.encoder,
            Group::Decoder => self.decoder,
        }
    }
}

/// Gradient pair for one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: TensorBuffer,
    pub bias: TensorBuffer,
}

pub type GradMap = BTreeMap<String, LayerGrads>;

impl ParamSet {
    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn get(&self, id: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut LayerParams> {
        self.layers.iter_mut().find(|l| l.id == id)
    }

    pub fn group_of(&self, id: &str) -> Option<Group> {
        self.get(id).map(|l| l.group)
    }

    pub fn ids(&self, sel: GroupSel) -> impl Iterator<Item = &str> {
        self.layers
            .iter()
            .filter(move |l| sel.includes(l.group))
            .map(|l| l.id.as_str())
    }

    /// Exact element count of the selected partition.
    pub fn param_count(&self, sel: GroupSel) -> u64 {
        self.layers
            .iter()
            .filter(|l| sel.includes(l.group))
            .map(|l| (l.weight.len() + l.bias.len()) as u64)
            .sum()
    }

    /// Element count of the groups left trainable by `mask`.
    pub fn unfrozen_param_count(&self, mask: &FreezeMask) -> u64 {
        self.layers
            .iter()
            .filter(|l| !mask.is_frozen(l.group))
            .map(|l| (l.weight.len() + l.bias.len()) as u64)
            .sum()
    }

    /// Weight tensors of the encoder partition, in topology order. Biases are
    /// deliberately excluded: the drift monitor watches weights only.
    pub fn encoder_weights(&self) -> Vec<TensorBuffer> {
        self.layers
            .iter()
            .filter(|l| l.group == Group::Encoder)
            .map(|l| l.weight.clone())
            .collect()
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(other.layers.iter()).all(|(a, b)| {
                a.id == b.id
                    && a.group == b.group
                    && a.weight.same_shape(&b.weight)
                    && a.bias.same_shape(&b.bias)
            })
    }

    pub fn ensure_same_partition(&self, other: &Self) -> Result<()> {
        if self.same_partition(other) {
            Ok(())
        } else {
            Err(Error::Contract(
                "parameter sets have mismatched layer partitions".into(),
            ))
        }
    }

    /// Serialized byte size of one partition in the record format. Record
    /// sizes are additive, so `encoded_size(All)` is exactly
    /// `encoded_size(Encoder) + encoded_size(Decoder)`.
    pub fn encoded_size(&self, sel: GroupSel) -> u64 {
        self.layers
            .iter()
            .filter(|l| sel.includes(l.group))
            .map(|l| {
                [&l.weight, &l.bias]
                    .iter()
                    .map(|t| 4 + l.id.len() as u64 + 1 + t.encoded_len() as u64)
                    .sum::<u64>()
            })
            .sum()
    }

    /// Encodes `(layer-id, role, shape, little-endian f64 payload)` records
    /// for the selected partition, in topology order.
    pub fn encode_group(&self, sel: GroupSel) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_size(sel) as usize);
        for l in self.layers.iter().filter(|l| sel.includes(l.group)) {
            for (role, tensor) in [(0u8, &l.weight), (1u8, &l.bias)] {
                out.extend_from_slice(&(l.id.len() as u32).to_le_bytes());
                out.extend_from_slice(l.id.as_bytes());
                out.push(role);
                tensor.encode_into(&mut out);
            }
        }
        out
    }

    /// Overwrites tensors named in an encoded partition; ids and shapes must
    /// match existing layers.
    pub fn apply_encoded(&mut self, bytes: &[u8]) -> Result<()> {
        let mut cursor = 0usize;
        while cursor < bytes.len() {
            let id_len = u32::from_le_bytes(
                bytes
                    .get(cursor..cursor + 4)
                    .ok_or_else(|| Error::Decode("truncated record header".into()))?
                    .try_into()
                    .unwrap(),
            ) as usize;
            if id_len == 0 || id_len > 1024 {
                return Err(Error::Decode(format!("implausible layer id length {id_len}")));
            }
            cursor += 4;
            let id = std::str::from_utf8(
                bytes
                    .get(cursor..cursor + id_len)
                    .ok_or_else(|| Error::Decode("truncated layer id".into()))?,
            )
            .map_err(|_| Error::Decode("layer id is not utf-8".into()))?
            .to_string();
            cursor += id_len;
            let role = *bytes
                .get(cursor)
                .ok_or_else(|| Error::Decode("truncated role byte".into()))?;
            cursor += 1;
            let tensor = TensorBuffer::decode_from(bytes, &mut cursor)?;
            let layer = self
                .get_mut(&id)
                .ok_or_else(|| Error::Decode(format!("unknown layer id `{id}`")))?;
            let slot = match role {
                0 => &mut layer.weight,
                1 => &mut layer.bias,
                other => return Err(Error::Decode(format!("unknown tensor role {other}"))),
            };
            slot.ensure_same_shape(&tensor)?;
            *slot = tensor;
        }
        Ok(())
    }
}

/// Deterministic He-uniform initialization: conv weights drawn from
/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))` with a per-layer-id seed stream,
/// biases zero. Same `(config, seed)` always yields the same bits.
pub fn build_model(config: &ModelConfig) -> Result<ParamSet> {
    config.validate()?;
    let mut layers = Vec::new();
    for spec in &config.layers {
        if !spec.kind.is_parameterized() {
            continue;
        }
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let fan_in = (cin * 9) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(layer_seed(config.seed, &spec.id));
        let n = cout * cin * 9;
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        layers.push(LayerParams {
            id: spec.id.clone(),
            group: spec.group,
            weight: TensorBuffer::new(vec![cout, cin, 3, 3], data)?,
            bias: TensorBuffer::zeros(&[cout]),
        });
    }
    Ok(ParamSet { layers })
}

/// FNV-1a over the layer id, mixed with the model seed via splitmix64.
fn layer_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(seed ^ h)
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Stable seed for the `(run, client, round)` data-order stream.
pub fn derive_round_seed(run_seed: u64, client_id: u64, round: u64) -> u64 {
    splitmix64(splitmix64(run_seed ^ client_id.rotate_left(17)) ^ round.rotate_left(41))
}
