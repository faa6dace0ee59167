//! Reverse-mode pass over the layer chain.
//!
//! Gradients are produced only for unfrozen parameterized layers. The pass
//! walks no deeper than the earliest such layer: anything below it (frozen
//! groups at the start of the topology, skip sources feeding them) receives
//! no gradient traffic at all, which is also what the FLOP ledger counts.

use crate::error::{Error, Result};
use crate::nn::forward::{dims4, Tape};
use crate::nn::params::{FreezeMask, GradMap, LayerGrads, ParamSet};
use crate::nn::spec::{LayerKind, ModelConfig};
use crate::tensor::TensorBuffer;

/// Index of the earliest unfrozen parameterized layer, if any.
pub(crate) fn earliest_trainable(config: &ModelConfig, mask: &FreezeMask) -> Option<usize> {
    config
        .layers
        .iter()
        .position(|l| l.kind.is_parameterized() && !mask.is_frozen(l.group))
}

pub fn backward(
    config: &ModelConfig,
    params: &ParamSet,
    tape: &mut Tape,
    loss_grad: &TensorBuffer,
    mask: &FreezeMask,
) -> Result<GradMap> {
    if tape.consumed {
        return Err(Error::StaleTape);
    }
    tape.consumed = true;
    tape.prediction().ensure_same_shape(loss_grad)?;

    let mut grads = GradMap::new();
    let Some(first) = earliest_trainable(config, mask) else {
        return Ok(grads); // everything frozen: nothing to compute
    };

    let n = config.layers.len();
    let mut out_grads: Vec<Option<TensorBuffer>> = vec![None; n];
    out_grads[n - 1] = Some(loss_grad.clone());

    for i in (first..n).rev() {
        let g = out_grads[i]
            .take()
            .expect("output gradient available for every layer above the stop index");
        let layer = &config.layers[i];
        match &layer.kind {
            LayerKind::Conv3x3 | LayerKind::ConvStride2 => {
                let stride = if layer.kind == LayerKind::Conv3x3 { 1 } else { 2 };
                let input = tape.layer_input(i);
                if !mask.is_frozen(layer.group) {
                    grads.insert(layer.id.clone(), conv_grads(input, &g, stride));
                }
                if i > first {
                    let p = params.get(&layer.id).unwrap();
                    let din = conv_input_grad(&g, &p.weight, input.shape(), stride);
                    accumulate(&mut out_grads[i - 1], din);
                }
            }
            LayerKind::Upsample2xConv => {
                let up_input = &tape.upsampled[&i];
                if !mask.is_frozen(layer.group) {
                    grads.insert(layer.id.clone(), conv_grads(up_input, &g, 1));
                }
                if i > first {
                    let p = params.get(&layer.id).unwrap();
                    let din_up = conv_input_grad(&g, &p.weight, up_input.shape(), 1);
                    accumulate(&mut out_grads[i - 1], downsample_sum2x2(&din_up));
                }
            }
            LayerKind::ActivationRelu => {
                if i > first {
                    let din = tape.layer_input(i).zip_map(&g, |x, gv| {
                        if x > 0.0 {
                            gv
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut out_grads[i - 1], din);
                }
            }
            LayerKind::ActivationLeakyRelu { slope } => {
                if i > first {
                    let s = *slope;
                    let din = tape
                        .layer_input(i)
                        .zip_map(&g, |x, gv| if x > 0.0 { gv } else { s * gv })?;
                    accumulate(&mut out_grads[i - 1], din);
                }
            }
            LayerKind::ConcatSkip { source_id } => {
                let src = config.layer_index(source_id).expect("validated config");
                let cur_channels = tape.layer_input(i).shape()[1];
                let (dcur, dsrc) = split_channels(&g, cur_channels);
                if i > first {
                    accumulate(&mut out_grads[i - 1], dcur);
                }
                if src >= first {
                    accumulate(&mut out_grads[src], dsrc);
                }
                // gradient into a source below the stop index is dropped:
                // nothing trainable consumes it
            }
            LayerKind::ResidualAdd { source_id } => {
                let src = config.layer_index(source_id).expect("validated config");
                if src >= first {
                    accumulate(&mut out_grads[src], g.clone());
                }
                if i > first {
                    accumulate(&mut out_grads[i - 1], g);
                }
            }
        }
    }

    for (id, lg) in &grads {
        lg.weight.ensure_finite("weight gradient")?;
        lg.bias.ensure_finite("bias gradient")?;
        debug_assert!(params.get(id).is_some());
    }
    Ok(grads)
}

fn accumulate(slot: &mut Option<TensorBuffer>, g: TensorBuffer) {
    match slot {
        Some(existing) => existing
            .add_scaled(&g, 1.0)
            .expect("accumulated gradients share a shape"),
        None => *slot = Some(g),
    }
}

/// Weight and bias gradients of a padded 3x3 conv.
fn conv_grads(input: &TensorBuffer, out_grad: &TensorBuffer, stride: usize) -> LayerGrads {
    let (bsz, cin, h, w) = dims4(input);
    let (_, cout, oh, ow) = dims4(out_grad);
    let mut dw = TensorBuffer::zeros(&[cout, cin, 3, 3]);
    let mut db = TensorBuffer::zeros(&[cout]);
    let idata = input.data();
    let gdata = out_grad.data();

    {
        let dbd = db.data_mut();
        for b in 0..bsz {
            for oc in 0..cout {
                let gbase = (b * cout + oc) * oh * ow;
                let mut acc = 0.0;
                for v in &gdata[gbase..gbase + oh * ow] {
                    acc += v;
                }
                dbd[oc] += acc;
            }
        }
    }

    let dwd = dw.data_mut();
    for b in 0..bsz {
        for oc in 0..cout {
            let gbase = (b * cout + oc) * oh * ow;
            for ic in 0..cin {
                let ibase = (b * cin + ic) * h * w;
                let wbase = (oc * cin + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = ibase + iy as usize * w;
                            let grow = gbase + oy * ow;
                            for ox in 0..ow {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += gdata[grow + ox] * idata[irow + ix as usize];
                            }
                        }
                        dwd[wbase + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
    LayerGrads {
        weight: dw,
        bias: db,
    }
}

/// Gradient w.r.t. the conv input: scatter of `weight * out_grad` back onto
/// input coordinates.
fn conv_input_grad(
    out_grad: &TensorBuffer,
    weight: &TensorBuffer,
    input_shape: &[usize],
    stride: usize,
) -> TensorBuffer {
    let (bsz, cout, oh, ow) = dims4(out_grad);
    let (cin, h, w) = (input_shape[1], input_shape[2], input_shape[3]);
    let mut din = TensorBuffer::zeros(input_shape);
    let gdata = out_grad.data();
    let wdata = weight.data();
    let ddata = din.data_mut();
    for b in 0..bsz {
        for oc in 0..cout {
            let gbase = (b * cout + oc) * oh * ow;
            for ic in 0..cin {
                let dbase = (b * cin + ic) * h * w;
                let wbase = (oc * cin + ic) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = wdata[wbase + ky * 3 + kx];
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let drow = dbase + iy as usize * w;
                            let grow = gbase + oy * ow;
                            for ox in 0..ow {
                                let ix = (ox * stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                ddata[drow + ix as usize] += wv * gdata[grow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

/// Adjoint of nearest-neighbour 2x upsampling: sum each 2x2 block.
fn downsample_sum2x2(g: &TensorBuffer) -> TensorBuffer {
    let (bsz, c, h2, w2) = dims4(g);
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = TensorBuffer::zeros(&[bsz, c, h, w]);
    let gdata = g.data();
    let odata = out.data_mut();
    for bc in 0..bsz * c {
        let gbase = bc * h2 * w2;
        let obase = bc * h * w;
        for y in 0..h {
            for x in 0..w {
                let g00 = gdata[gbase + (2 * y) * w2 + 2 * x];
                let g01 = gdata[gbase + (2 * y) * w2 + 2 * x + 1];
                let g10 = gdata[gbase + (2 * y + 1) * w2 + 2 * x];
                let g11 = gdata[gbase + (2 * y + 1) * w2 + 2 * x + 1];
                odata[obase + y * w + x] = g00 + g01 + g10 + g11;
            }
        }
    }
    out
}

fn split_channels(g: &TensorBuffer, first_channels: usize) -> (TensorBuffer, TensorBuffer) {
    let (bsz, c, h, w) = dims4(g);
    let rest = c - first_channels;
    let plane = h * w;
    let mut a = TensorBuffer::zeros(&[bsz, first_channels, h, w]);
    let mut b = TensorBuffer::zeros(&[bsz, rest, h, w]);
    for bi in 0..bsz {
        let src = bi * c * plane;
        let da = bi * first_channels * plane;
        let db = bi * rest * plane;
        a.data_mut()[da..da + first_channels * plane]
            .copy_from_slice(&g.data()[src..src + first_channels * plane]);
        b.data_mut()[db..db + rest * plane]
            .copy_from_slice(&g.data()[src + first_channels * plane..src + c * plane]);
    }
    (a, b)
}
