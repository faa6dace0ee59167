//! Layer and model descriptions for the toy encoder-decoder family.
//!
//! A model is an ordered chain of layers; skip layers (`ConcatSkip`,
//! `ResidualAdd`) additionally consume the recorded output of an earlier
//! layer. Validation walks the chain once, checking channel and spatial
//! arithmetic, and is a precondition for every other operation in this
//! module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Encoder,
    Decoder,
}

/// Partition selector for parameter counting and serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSel {
    Encoder,
    Decoder,
    All,
}

impl GroupSel {
    pub fn includes(self, group: Group) -> bool {
        match self {
            GroupSel::All => true,
            GroupSel::Encoder => group == Group::Encoder,
            GroupSel::Decoder => group == Group::Decoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// 3x3 convolution, stride 1, zero padding 1; preserves spatial dims.
    Conv3x3,
    /// 3x3 convolution, stride 2, zero padding 1; halves spatial dims.
    ConvStride2,
    /// Nearest-neighbour 2x upsample followed by a 3x3 stride-1 conv.
    Upsample2xConv,
    ActivationRelu,
    ActivationLeakyRelu { slope: f64 },
    /// Channel concatenation `[current, source]` with an earlier layer's output.
    ConcatSkip { source_id: String },
    /// Element-wise addition with an earlier layer's output.
    ResidualAdd { source_id: String },
}

impl LayerKind {
    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            LayerKind::Conv3x3 | LayerKind::ConvStride2 | LayerKind::Upsample2xConv
        )
    }

    pub fn source_id(&self) -> Option<&str> {
        match self {
            LayerKind::ConcatSkip { source_id } | LayerKind::ResidualAdd { source_id } => {
                Some(source_id)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub group: Group,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: Vec<LayerSpec>,
    /// `(channels, height, width)` of a single input image.
    pub input_shape: (usize, usize, usize),
    pub seed: u64,
}

/// Per-layer output geometry, produced while validating the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ModelConfig {
    /// Walks the layer chain validating channel/spatial arithmetic and skip
    /// references; returns the output shape of every layer on success.
    pub fn layer_shapes(&self) -> Result<Vec<LayerShape>> {
        let err = |layer: &str, reason: String| Error::ModelConfig {
            layer: layer.to_string(),
            reason,
        };
        if self.layers.is_empty() {
            return Err(Error::Empty("model has no layers"));
        }
        let (c0, h0, w0) = self.input_shape;
        if c0 == 0 || h0 == 0 || w0 == 0 {
            return Err(Error::Config("input_shape dims must be positive".into()));
        }
        let mut shapes: Vec<LayerShape> = Vec::with_capacity(self.layers.len());
        let mut cur = LayerShape {
            channels: c0,
            height: h0,
            width: w0,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_channels == 0 || layer.out_channels == 0 {
                return Err(err(&layer.id, "channel counts must be positive".into()));
            }
            if self.layers[..i].iter().any(|l| l.id == layer.id) {
                return Err(err(&layer.id, "duplicate layer id".into()));
            }
            let source_shape = match layer.kind.source_id() {
                Some(src) => {
                    let pos = self.layers[..i]
                        .iter()
                        .position(|l| l.id == src)
                        .ok_or_else(|| {
                            err(
                                &layer.id,
                                format!("skip source `{src}` must be an earlier layer"),
                            )
                        })?;
                    Some(shapes[pos])
                }
                None => None,
            };
            if layer.in_channels != cur.channels {
                return Err(err(
                    &layer.id,
                    format!(
                        "in_channels {} but incoming tensor has {} channels",
                        layer.in_channels, cur.channels
                    ),
                ));
            }
            cur = match &layer.kind {
                LayerKind::Conv3x3 => LayerShape {
                    channels: layer.out_channels,
                    ..cur
                },
                LayerKind::ConvStride2 => LayerShape {
                    channels: layer.out_channels,
                    height: conv_out(cur.height, 2),
                    width: conv_out(cur.width, 2),
                },
                LayerKind::Upsample2xConv => LayerShape {
                    channels: layer.out_channels,
                    height: cur.height * 2,
                    width: cur.width * 2,
                },
                LayerKind::ActivationRelu | LayerKind::ActivationLeakyRelu { .. } => {
                    if layer.out_channels != cur.channels {
                        return Err(err(
                            &layer.id,
                            "activation must preserve channel count".into(),
                        ));
                    }
                    cur
                }
                LayerKind::ConcatSkip { .. } => {
                    let src = source_shape.unwrap();
                    if (src.height, src.width) != (cur.height, cur.width) {
                        return Err(err(
                            &layer.id,
                            "concat source spatial dims differ from current".into(),
                        ));
                    }
                    if layer.out_channels != cur.channels + src.channels {
                        return Err(err(
                            &layer.id,
                            format!(
                                "concat out_channels must be {} (current {} + source {})",
                                cur.channels + src.channels,
                                cur.channels,
                                src.channels
                            ),
                        ));
                    }
                    LayerShape {
                        channels: cur.channels + src.channels,
                        ..cur
                    }
                }
                LayerKind::ResidualAdd { .. } => {
                    let src = source_shape.unwrap();
                    if src != cur {
                        return Err(err(
                            &layer.id,
                            "residual source shape differs from current".into(),
                        ));
                    }
                    if layer.out_channels != cur.channels {
                        return Err(err(
                            &layer.id,
                            "residual must preserve channel count".into(),
                        ));
                    }
                    cur
                }
            };
            shapes.push(cur);
        }
        for group in [Group::Encoder, Group::Decoder] {
            if !self
                .layers
                .iter()
                .any(|l| l.group == group && l.kind.is_parameterized())
            {
                return Err(Error::Config(format!(
                    "model needs at least one parameterized {group:?} layer"
                )));
            }
        }
        let last = *shapes.last().unwrap();
        if (last.height, last.width) != (h0, w0) {
            return Err(Error::Config(format!(
                "output spatial dims {}x{} do not match input {}x{}; \
                 downsampling and upsampling layers must balance",
                last.height, last.width, h0, w0
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map(|l| l.out_channels).unwrap_or(0)
    }

    pub fn layer_index(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }
}

/// Output length of a padded 3x3 convolution along one axis.
pub(crate) fn conv_out(len: usize, stride: usize) -> usize {
    (len + 2 - 3) / stride + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::presets;

    fn conv(id: &str, cin: usize, cout: usize, group: Group) -> LayerSpec {
        LayerSpec {
            id: id.into(),
            kind: LayerKind::Conv3x3,
            in_channels: cin,
            out_channels: cout,
            group,
        }
    }

    #[test]
    fn minimal_valid_chain() {
        let cfg = ModelConfig {
            layers: vec![conv("e0", 1, 2, Group::Encoder), conv("d0", 2, 1, Group::Decoder)],
            input_shape: (1, 8, 8),
            seed: 0,
        };
        let shapes = cfg.layer_shapes().unwrap();
        assert_eq!(shapes[0].channels, 2);
        assert_eq!(shapes[1].channels, 1);
        assert_eq!((shapes[1].height, shapes[1].width), (8, 8));
    }

    #[test]
    fn rejects_channel_mismatch() {
        let cfg = ModelConfig {
            layers: vec![conv("e0", 1, 2, Group::Encoder), conv("d0", 3, 1, Group::Decoder)],
            input_shape: (1, 8, 8),
            seed: 0,
        };
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("d0"), "error should name the layer: {e}");
    }

    #[test]
    fn rejects_forward_skip_reference() {
        let cfg = ModelConfig {
            layers: vec![
                conv("e0", 1, 2, Group::Encoder),
                LayerSpec {
                    id: "cat".into(),
                    kind: LayerKind::ConcatSkip {
                        source_id: "later".into(),
                    },
                    in_channels: 2,
                    out_channels: 4,
                    group: Group::Decoder,
                },
                conv("later", 4, 1, Group::Decoder),
            ],
            input_shape: (1, 8, 8),
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unbalanced_spatial_dims() {
        let cfg = ModelConfig {
            layers: vec![
                LayerSpec {
                    id: "down".into(),
                    kind: LayerKind::ConvStride2,
                    in_channels: 1,
                    out_channels: 2,
                    group: Group::Encoder,
                },
                conv("d0", 2, 1, Group::Decoder),
            ],
            input_shape: (1, 8, 8),
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_missing_decoder() {
        let cfg = ModelConfig {
            layers: vec![conv("e0", 1, 1, Group::Encoder), conv("e1", 1, 1, Group::Encoder)],
            input_shape: (1, 8, 8),
            seed: 0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn stride2_then_upsample_restores_even_dims() {
        assert_eq!(conv_out(32, 2), 16);
        assert_eq!(conv_out(16, 2), 8);
        assert_eq!(conv_out(32, 1), 32);
    }

    #[test]
    fn all_presets_validate() {
        for name in presets::PRESET_NAMES {
            let cfg = presets::preset(name, 32, 7).unwrap();
            cfg.validate()
                .unwrap_or_else(|e| panic!("preset {name} invalid: {e}"));
        }
    }
}
