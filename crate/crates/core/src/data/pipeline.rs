//! Preprocessing (square, resize, normalize) and paired augmentation.
//!
//! Preprocessing: center-crop to a square of the shorter side, bilinear-
//! resize to the requested output size, then min-max normalize source and
//! target independently to `[0, 1]`. Normalizing last makes the pipeline
//! exactly idempotent on its own output: the result always attains 0 and 1,
//! so a second normalization is the identity. A constant image normalizes
//! to all-zeros with a warning.
//!
//! Augmentation applies one spatial transform (flip, then rotation, then
//! integer translation) identically to source and target; out-of-bounds
//! regions are zero-filled and values clamped back to `[0, 1]`. Rotation
//! uses nearest-neighbour sampling, which keeps zero rotation an exact
//! identity on small images.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{AugmentSpec, PairedSample};
use crate::error::Result;
use crate::tensor::TensorBuffer;

pub fn preprocess(sample: &PairedSample, out_size: (usize, usize)) -> Result<PairedSample> {
    let prep = |img: &TensorBuffer| -> Result<TensorBuffer> {
        let square = center_crop_square(img);
        let resized = resize_bilinear(&square, out_size);
        Ok(minmax_normalize(&resized))
    };
    Ok(PairedSample {
        source: prep(&sample.source)?,
        target: prep(&sample.target)?,
        subject_id: sample.subject_id,
    })
}

fn minmax_normalize(img: &TensorBuffer) -> TensorBuffer {
    let min = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        log::warn!("constant image: min-max normalization degenerates to all-zeros");
        return TensorBuffer::zeros(img.shape());
    }
    let range = max - min;
    img.map(|v| (v - min) / range)
}

fn center_crop_square(img: &TensorBuffer) -> TensorBuffer {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let side = h.min(w);
    if h == w {
        return img.clone();
    }
    let top = (h - side) / 2;
    let left = (w - side) / 2;
    let mut out = TensorBuffer::zeros(&[side, side]);
    for y in 0..side {
        let src = (top + y) * w + left;
        out.data_mut()[y * side..(y + 1) * side]
            .copy_from_slice(&img.data()[src..src + side]);
    }
    out
}

/// Half-pixel-centre bilinear resampling; an exact identity when sizes match.
fn resize_bilinear(img: &TensorBuffer, out_size: (usize, usize)) -> TensorBuffer {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let (oh, ow) = out_size;
    if (h, w) == (oh, ow) {
        return img.clone();
    }
    let mut out = TensorBuffer::zeros(&[oh, ow]);
    let sy_scale = h as f64 / oh as f64;
    let sx_scale = w as f64 / ow as f64;
    for oy in 0..oh {
        let sy = ((oy as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..ow {
            let sx = ((ox as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = img.at2(y0, x0) * (1.0 - fx) + img.at2(y0, x1) * fx;
            let bottom = img.at2(y1, x0) * (1.0 - fx) + img.at2(y1, x1) * fx;
            out.data_mut()[oy * ow + ox] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// One concrete spatial transform; `shift` is `(dy, dx)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub flip_horizontal: bool,
    pub rotation_deg: f64,
    pub shift: (i64, i64),
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            flip_horizontal: false,
            rotation_deg: 0.0,
            shift: (0, 0),
        }
    }
}

/// Draws a random transform within the spec's bounds.
pub fn draw_transform(spec: &AugmentSpec, rng: &mut ChaCha8Rng) -> Transform {
    let flip_horizontal = spec.allow_flip && rng.random_bool(0.5);
    let rotation_deg = if spec.max_rotation_deg > 0.0 {
        rng.random_range(-spec.max_rotation_deg..spec.max_rotation_deg)
    } else {
        0.0
    };
    let shift = if spec.max_translation_px > 0 {
        let t = spec.max_translation_px as i64;
        (rng.random_range(-t..=t), rng.random_range(-t..=t))
    } else {
        (0, 0)
    };
    Transform {
        flip_horizontal,
        rotation_deg,
        shift,
    }
}

/// Applies flip, rotation (nearest-neighbour, zero fill), then translation
/// (zero fill), clamping the result to `[0, 1]`.
pub fn apply_transform(img: &TensorBuffer, t: &Transform) -> TensorBuffer {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut cur = if t.flip_horizontal {
        let mut out = TensorBuffer::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                out.data_mut()[y * w + x] = img.at2(y, w - 1 - x);
            }
        }
        out
    } else {
        img.clone()
    };

    if t.rotation_deg != 0.0 {
        let theta = t.rotation_deg.to_radians();
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let cx = (w - 1) as f64 / 2.0;
        let cy = (h - 1) as f64 / 2.0;
        let mut out = TensorBuffer::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let sx = (cos_t * dx + sin_t * dy + cx).round();
                let sy = (-sin_t * dx + cos_t * dy + cy).round();
                if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                    out.data_mut()[y * w + x] = cur.at2(sy as usize, sx as usize);
                }
            }
        }
        cur = out;
    }

    if t.shift != (0, 0) {
        let (dy, dx) = t.shift;
        let mut out = TensorBuffer::zeros(&[h, w]);
        for y in 0..h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            for x in 0..w {
                let sx = x as i64 - dx;
                if sx < 0 || sx >= w as i64 {
                    continue;
                }
                out.data_mut()[y * w + x] = cur.at2(sy as usize, sx as usize);
            }
        }
        cur = out;
    }

    cur.map(|v| v.clamp(0.0, 1.0))
}

/// Draws one transform and applies it identically to source and target.
pub fn augment(
    sample: &PairedSample,
    spec: &AugmentSpec,
    rng: &mut ChaCha8Rng,
) -> Result<PairedSample> {
    spec.validate(sample.source.shape()[1])?;
    let t = draw_transform(spec, rng);
    Ok(PairedSample {
        source: apply_transform(&sample.source, &t),
        target: apply_transform(&sample.target, &t),
        subject_id: sample.subject_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn ramp(h: usize, w: usize) -> TensorBuffer {
        TensorBuffer::new(
            vec![h, w],
            (0..h * w).map(|i| i as f64 / (h * w - 1) as f64).collect(),
        )
        .unwrap()
    }

    fn pair(h: usize, w: usize) -> PairedSample {
        PairedSample {
            source: ramp(h, w),
            target: ramp(h, w).map(|v| 1.0 - v),
            subject_id: 0,
        }
    }

    #[test]
    fn preprocess_is_idempotent_on_its_own_output() {
        let raw = PairedSample {
            source: ramp(40, 40).map(|v| 0.3 + 4.0 * v),
            target: ramp(40, 40),
            subject_id: 1,
        };
        let once = preprocess(&raw, (32, 32)).unwrap();
        let twice = preprocess(&once, (32, 32)).unwrap();
        for (a, b) in once.source.data().iter().zip(twice.source.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in once.target.data().iter().zip(twice.target.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_normalizes_to_zeros() {
        let flat = PairedSample {
            source: TensorBuffer::filled(&[20, 20], 0.7),
            target: ramp(20, 20),
            subject_id: 0,
        };
        let out = preprocess(&flat, (16, 16)).unwrap();
        assert!(out.source.data().iter().all(|&v| v == 0.0));
        assert!(out.target.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rectangular_native_resizes_to_requested_square() {
        let raw = PairedSample {
            source: ramp(40, 48),
            target: ramp(40, 48),
            subject_id: 0,
        };
        let out = preprocess(&raw, (32, 32)).unwrap();
        assert_eq!(out.source.shape(), &[32, 32]);
        assert!(out
            .source
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_spec_augment_is_identity() {
        let sample = pair(16, 16);
        let spec = AugmentSpec {
            max_rotation_deg: 0.0,
            max_translation_px: 0,
            allow_flip: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment(&sample, &spec, &mut rng).unwrap();
        assert_eq!(out.source, sample.source);
        assert_eq!(out.target, sample.target);
    }

    #[test]
    fn horizontal_flip_is_an_involution() {
        let img = ramp(12, 17);
        let t = Transform {
            flip_horizontal: true,
            rotation_deg: 0.0,
            shift: (0, 0),
        };
        let twice = apply_transform(&apply_transform(&img, &t), &t);
        assert_eq!(twice, img);
    }

    #[test]
    fn zero_rotation_is_exact_identity() {
        let img = ramp(15, 15);
        let t = Transform {
            flip_horizontal: false,
            rotation_deg: 0.0,
            shift: (0, 0),
        };
        assert_eq!(apply_transform(&img, &t), img);
    }

    // direct pixel-shift oracle: +2 then -2 along x restores everything
    // except a 2-px zero band at the trailing edge
    #[test]
    fn translate_and_back_leaves_zero_band() {
        let img = ramp(10, 10).map(|v| 0.1 + 0.8 * v); // keep off zero
        let right = Transform {
            flip_horizontal: false,
            rotation_deg: 0.0,
            shift: (0, 2),
        };
        let left = Transform {
            flip_horizontal: false,
            rotation_deg: 0.0,
            shift: (0, -2),
        };
        let out = apply_transform(&apply_transform(&img, &right), &left);
        for y in 0..10 {
            for x in 0..10 {
                let v = out.at2(y, x);
                if x >= 8 {
                    assert_eq!(v, 0.0, "trailing band must be zero-filled at ({y},{x})");
                } else {
                    assert_eq!(v, img.at2(y, x), "interior must be restored at ({y},{x})");
                }
            }
        }
    }

    proptest! {
        // paired consistency: target = source / 2 is preserved by any draw,
        // because zero-fill and clamping commute with halving
        #[test]
        fn augment_applies_the_same_transform_to_both(seed in any::<u64>()) {
            let source = ramp(16, 16);
            let sample = PairedSample {
                target: source.map(|v| v / 2.0),
                source,
                subject_id: 3,
            };
            let spec = AugmentSpec {
                max_rotation_deg: 30.0,
                max_translation_px: 3,
                allow_flip: true,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment(&sample, &spec, &mut rng).unwrap();
            for (s, t) in out.source.data().iter().zip(out.target.data()) {
                prop_assert!((t - s / 2.0).abs() < 1e-15);
            }
        }

        #[test]
        fn preprocessed_pixels_stay_in_unit_range(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..30 * 22)
                .map(|_| rng.random_range(-5.0..10.0))
                .collect();
            let raw = PairedSample {
                source: TensorBuffer::new(vec![30, 22], data.clone()).unwrap(),
                target: TensorBuffer::new(vec![30, 22], data).unwrap(),
                subject_id: 0,
            };
            let out = preprocess(&raw, (16, 16)).unwrap();
            for &v in out.source.data() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
