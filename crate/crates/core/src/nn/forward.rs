//! Forward pass over the layer chain, recording the activation tape needed
//! by the backward pass.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;
use crate::nn::spec::{LayerKind, ModelConfig};
use crate::tensor::TensorBuffer;

/// Activations recorded by [`forward`]. Single use: the backward pass
/// consumes it and a second use is rejected as stale.
#[derive(Debug)]
pub struct Tape {
    pub(crate) consumed: bool,
    pub(crate) batch: TensorBuffer,
    /// Output of every layer, in topology order.
    pub(crate) outputs: Vec<TensorBuffer>,
    /// Post-upsample conv inputs, keyed by layer index.
    pub(crate) upsampled: BTreeMap<usize, TensorBuffer>,
}

impl Tape {
    pub(crate) fn layer_input(&self, index: usize) -> &TensorBuffer {
        if index == 0 {
            &self.batch
        } else {
            &self.outputs[index - 1]
        }
    }

    pub fn prediction(&self) -> &TensorBuffer {
        self.outputs.last().expect("tape from a validated forward")
    }
}

/// Runs the network on a `(batch, channels, height, width)` input.
///
/// Returns the prediction and the tape for a subsequent backward pass. The
/// prediction keeps the input's spatial dims and carries the final layer's
/// `out_channels`.
pub fn forward(
    config: &ModelConfig,
    params: &ParamSet,
    batch: &TensorBuffer,
) -> Result<(TensorBuffer, Tape)> {
    let (c0, h0, w0) = config.input_shape;
    let shape = batch.shape();
    if shape.len() != 4 || shape[1] != c0 || shape[2] != h0 || shape[3] != w0 || shape[0] == 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![0, c0, h0, w0],
            actual: shape.to_vec(),
        });
    }

    let mut outputs: Vec<TensorBuffer> = Vec::with_capacity(config.layers.len());
    let mut upsampled = BTreeMap::new();
    for (i, layer) in config.layers.iter().enumerate() {
        let input = if i == 0 { batch } else { &outputs[i - 1] };
        let out = match &layer.kind {
            LayerKind::Conv3x3 | LayerKind::ConvStride2 => {
                let stride = if layer.kind == LayerKind::Conv3x3 { 1 } else { 2 };
                let p = params.get(&layer.id).ok_or_else(|| {
                    Error::Contract(format!("no parameters for layer `{}`", layer.id))
                })?;
                conv_forward(input, &p.weight, &p.bias, stride)
            }
            LayerKind::Upsample2xConv => {
                let p = params.get(&layer.id).ok_or_else(|| {
                    Error::Contract(format!("no parameters for layer `{}`", layer.id))
                })?;
                let up = upsample2x(input);
                let out = conv_forward(&up, &p.weight, &p.bias, 1);
                upsampled.insert(i, up);
                out
            }
            LayerKind::ActivationRelu => input.map(|v| v.max(0.0)),
            LayerKind::ActivationLeakyRelu { slope } => {
                let s = *slope;
                input.map(move |v| if v > 0.0 { v } else { s * v })
            }
            LayerKind::ConcatSkip { source_id } => {
                let src_idx = config.layer_index(source_id).expect("validated config");
                concat_channels(input, &outputs[src_idx])
            }
            LayerKind::ResidualAdd { source_id } => {
                let src_idx = config.layer_index(source_id).expect("validated config");
                input.zip_map(&outputs[src_idx], |a, b| a + b)?
            }
        };
        outputs.push(out);
    }

    let prediction = outputs.last().unwrap().clone();
    prediction.ensure_finite("forward prediction")?;
    Ok((
        prediction,
        Tape {
            consumed: false,
            batch: batch.clone(),
            outputs,
            upsampled,
        },
    ))
}

/// Zero-padded 3x3 convolution; `stride` 1 preserves spatial dims, 2 halves
/// them. Fixed loop order keeps summation bit-deterministic.
pub(crate) fn conv_forward(
    input: &TensorBuffer,
    weight: &TensorBuffer,
    bias: &TensorBuffer,
    stride: usize,
) -> TensorBuffer {
    let (bsz, cin, h, w) = dims4(input);
    let cout = weight.shape()[0];
    debug_assert_eq!(weight.shape(), &[cout, cin, 3, 3]);
    let oh = (h + 2 - 3) / stride + 1;
    let ow = (w + 2 - 3) / stride + 1;
    let mut out = TensorBuffer::zeros(&[bsz, cout, oh, ow]);

    let idata = input.data();
    let wdata = weight.data();
    let bdata = bias.data();
    let odata = out.data_mut();
    for b in 0..bsz {
        for oc in 0..cout {
            let obase = (b * cout + oc) * oh * ow;
            odata[obase..obase + oh * ow].fill(bdata[oc]);
            for ic in 0..cin {
                let ibase = (b * cin + ic) * h * w;
                let wbase = (oc * cin + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = wdata[wbase + ky * 3 + kx];
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = ibase + iy as usize * w;
                            let orow = obase + oy * ow;
                            for ox in 0..ow {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                odata[orow + ox] += wv * idata[irow + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn upsample2x(input: &TensorBuffer) -> TensorBuffer {
    let (bsz, c, h, w) = dims4(input);
    let mut out = TensorBuffer::zeros(&[bsz, c, 2 * h, 2 * w]);
    let idata = input.data();
    let odata = out.data_mut();
    for bc in 0..bsz * c {
        let ibase = bc * h * w;
        let obase = bc * 4 * h * w;
        for y in 0..2 * h {
            let irow = ibase + (y / 2) * w;
            let orow = obase + y * 2 * w;
            for x in 0..2 * w {
                odata[orow + x] = idata[irow + x / 2];
            }
        }
    }
    out
}

fn concat_channels(a: &TensorBuffer, b: &TensorBuffer) -> TensorBuffer {
    let (bsz, ca, h, w) = dims4(a);
    let cb = b.shape()[1];
    let mut out = TensorBuffer::zeros(&[bsz, ca + cb, h, w]);
    let plane = h * w;
    let odata = out.data_mut();
    for bi in 0..bsz {
        let dst = bi * (ca + cb) * plane;
        let src_a = bi * ca * plane;
        let src_b = bi * cb * plane;
        odata[dst..dst + ca * plane].copy_from_slice(&a.data()[src_a..src_a + ca * plane]);
        odata[dst + ca * plane..dst + (ca + cb) * plane]
            .copy_from_slice(&b.data()[src_b..src_b + cb * plane]);
    }
    out
}

pub(crate) fn dims4(t: &TensorBuffer) -> (usize, usize, usize, usize) {
    let s = t.shape();
    debug_assert_eq!(s.len(), 4);
    (s[0], s[1], s[2], s[3])
}
