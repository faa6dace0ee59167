//! Named toy encoder-decoder presets.
//!
//! Five small architectures varying depth, width, and skip type: a
//! concat-skip U-Net, a residual-skip variant, a deeper multi-block net,
//! a bottleneck-residual net, and a narrow leaky-ReLU net. They share the
//! single-channel image-to-image contract and differ only in topology.

use crate::error::{Error, Result};
use crate::nn::spec::{Group, LayerKind, LayerSpec, ModelConfig};

pub const PRESET_NAMES: &[&str] = &[
    "unet_concat",
    "unet_residual",
    "deep_dropoutless",
    "bottleneck_residual",
    "light_leaky",
];

pub const DEFAULT_PRESET: &str = "unet_concat";

fn layer(id: &str, kind: LayerKind, cin: usize, cout: usize, group: Group) -> LayerSpec {
    LayerSpec {
        id: id.to_string(),
        kind,
        in_channels: cin,
        out_channels: cout,
        group,
    }
}

fn conv(id: &str, cin: usize, cout: usize, g: Group) -> LayerSpec {
    layer(id, LayerKind::Conv3x3, cin, cout, g)
}

fn down(id: &str, cin: usize, cout: usize, g: Group) -> LayerSpec {
    layer(id, LayerKind::ConvStride2, cin, cout, g)
}

fn up(id: &str, cin: usize, cout: usize, g: Group) -> LayerSpec {
    layer(id, LayerKind::Upsample2xConv, cin, cout, g)
}

fn relu(id: &str, c: usize, g: Group) -> LayerSpec {
    layer(id, LayerKind::ActivationRelu, c, c, g)
}

fn leaky(id: &str, c: usize, g: Group) -> LayerSpec {
    layer(id, LayerKind::ActivationLeakyRelu { slope: 0.1 }, c, c, g)
}

fn concat(id: &str, src: &str, cin: usize, g: Group) -> LayerSpec {
    layer(
        id,
        LayerKind::ConcatSkip {
            source_id: src.to_string(),
        },
        cin,
        cin * 2,
        g,
    )
}

fn residual(id: &str, src: &str, c: usize, g: Group) -> LayerSpec {
    layer(
        id,
        LayerKind::ResidualAdd {
            source_id: src.to_string(),
        },
        c,
        c,
        g,
    )
}

/// Builds a preset by name for square `side x side` single-channel inputs.
pub fn preset(name: &str, side: usize, seed: u64) -> Result<ModelConfig> {
    use Group::{Decoder as D, Encoder as E};
    let layers = match name {
        "unet_concat" => vec![
            conv("enc_conv0", 1, 8, E),
            relu("enc_act0", 8, E),
            down("enc_down0", 8, 16, E),
            relu("enc_act1", 16, E),
            up("dec_up0", 16, 8, D),
            relu("dec_act0", 8, D),
            concat("dec_cat0", "enc_act0", 8, D),
            conv("dec_conv0", 16, 8, D),
            relu("dec_act1", 8, D),
            conv("dec_out", 8, 1, D),
        ],
        "unet_residual" => vec![
            conv("enc_conv0", 1, 8, E),
            relu("enc_act0", 8, E),
            down("enc_down0", 8, 16, E),
            relu("enc_act1", 16, E),
            up("dec_up0", 16, 8, D),
            relu("dec_act0", 8, D),
            residual("dec_res0", "enc_act0", 8, D),
            conv("dec_conv0", 8, 8, D),
            relu("dec_act1", 8, D),
            conv("dec_out", 8, 1, D),
        ],
        "deep_dropoutless" => vec![
            conv("enc_conv0", 1, 8, E),
            relu("enc_act0", 8, E),
            conv("enc_conv1", 8, 8, E),
            relu("enc_act1", 8, E),
            down("enc_down0", 8, 16, E),
            relu("enc_act2", 16, E),
            conv("enc_conv2", 16, 16, E),
            relu("enc_act3", 16, E),
            down("enc_down1", 16, 32, E),
            relu("enc_act4", 32, E),
            up("dec_up0", 32, 16, D),
            relu("dec_act0", 16, D),
            conv("dec_conv0", 16, 16, D),
            relu("dec_act1", 16, D),
            up("dec_up1", 16, 8, D),
            relu("dec_act2", 8, D),
            conv("dec_conv1", 8, 8, D),
            relu("dec_act3", 8, D),
            conv("dec_out", 8, 1, D),
        ],
        "bottleneck_residual" => vec![
            conv("enc_conv0", 1, 8, E),
            relu("enc_act0", 8, E),
            down("enc_down0", 8, 16, E),
            relu("enc_act1", 16, E),
            conv("enc_conv1", 16, 16, E),
            relu("enc_act2", 16, E),
            conv("enc_conv2", 16, 16, E),
            residual("enc_res0", "enc_act1", 16, E),
            relu("enc_act3", 16, E),
            up("dec_up0", 16, 8, D),
            relu("dec_act0", 8, D),
            residual("dec_res0", "enc_act0", 8, D),
            conv("dec_conv0", 8, 8, D),
            relu("dec_act1", 8, D),
            conv("dec_out", 8, 1, D),
        ],
        "light_leaky" => vec![
            conv("enc_conv0", 1, 4, E),
            leaky("enc_act0", 4, E),
            down("enc_down0", 4, 8, E),
            leaky("enc_act1", 8, E),
            up("dec_up0", 8, 4, D),
            leaky("dec_act0", 4, D),
            concat("dec_cat0", "enc_act0", 4, D),
            conv("dec_conv0", 8, 4, D),
            leaky("dec_act1", 4, D),
            conv("dec_out", 4, 1, D),
        ],
        other => {
            return Err(Error::Config(format!(
                "unknown model preset `{other}`; known presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    let config = ModelConfig {
        layers,
        input_shape: (1, side, side),
        seed,
    };
    config.validate()?;
    Ok(config)
}
