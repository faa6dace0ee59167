//! Phantom generation: deterministic per `(silo seed, subject_id)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{PairedSample, SiloConfig};
use crate::error::Result;
use crate::nn::derive_round_seed;
use crate::tensor::TensorBuffer;

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos_t: f64,
    sin_t: f64,
    intensity: f64,
}

impl Ellipse {
    /// Soft-edged coverage: 1 inside, ramping to 0 near the rim.
    fn value_at(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (self.cos_t * dx + self.sin_t * dy) / self.rx;
        let v = (-self.sin_t * dx + self.cos_t * dy) / self.ry;
        let r2 = u * u + v * v;
        if r2 >= 1.0 {
            0.0
        } else {
            self.intensity * (2.0 * (1.0 - r2)).min(1.0)
        }
    }
}

/// Fixed nonlinear intensity remap shared by every silo; depends on the
/// clean phantom only, which is what makes the target domain common.
fn target_map(p: f64) -> f64 {
    p * p * (3.0 - 2.0 * p)
}

/// Generates a silo at native resolution, pre-normalization.
///
/// Each subject is drawn from a stream seeded by `(silo seed, subject_id)`:
/// the phantom ellipses come first, then the bias-field parameters, then
/// per-pixel noise, so the target (phantom-only) is invariant to the silo's
/// intensity parameters.
pub fn generate_silo(cfg: &SiloConfig) -> Result<Vec<PairedSample>> {
    cfg.validate()?;
    let (h, w) = cfg.native_size;
    let mut samples = Vec::with_capacity(cfg.n_subjects);
    for subject in 0..cfg.n_subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_round_seed(cfg.seed, subject as u64, 0));

        let n_ellipses = rng.random_range(3..=5usize);
        let ellipses: Vec<Ellipse> = (0..n_ellipses)
            .map(|_| {
                let theta = rng.random_range(0.0..std::f64::consts::PI);
                Ellipse {
                    cx: rng.random_range(0.25..0.75) * w as f64,
                    cy: rng.random_range(0.25..0.75) * h as f64,
                    rx: rng.random_range(0.08..0.28) * w as f64,
                    ry: rng.random_range(0.08..0.28) * h as f64,
                    cos_t: theta.cos(),
                    sin_t: theta.sin(),
                    intensity: rng.random_range(0.3..1.0),
                }
            })
            .collect();

        // smooth multiplicative bias field parameters, drawn even when the
        // strength is zero so the stream layout is silo-parameter-invariant
        let fx = rng.random_range(0.5..1.5);
        let fy = rng.random_range(0.5..1.5);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);

        let mut phantom = TensorBuffer::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                let mut v: f64 = 0.0;
                for e in &ellipses {
                    v = v.max(e.value_at(x as f64, y as f64));
                }
                phantom.data_mut()[y * w + x] = v;
            }
        }

        let mut source = TensorBuffer::zeros(&[h, w]);
        for y in 0..h {
            for x in 0..w {
                let bias = 1.0
                    + cfg.bias_field_strength
                        * (std::f64::consts::TAU
                            * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64)
                            + phase)
                            .sin();
                source.data_mut()[y * w + x] =
                    cfg.intensity_gain * phantom.data()[y * w + x] * bias;
            }
        }
        if cfg.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
            for v in source.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }

        let target = phantom.map(target_map);
        source.ensure_finite("silo source")?;
        samples.push(PairedSample {
            source,
            target,
            subject_id: subject as u32,
        });
    }
    Ok(samples)
}
