//! Image-similarity metrics: MAE, PSNR, and SSIM.
//!
//! PSNR of identical images is represented by an explicit `None` sentinel
//! rather than a float infinity so reports stay JSON-clean. SSIM follows
//! the standard formulation: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
//! K2 = 0.03, data range 1, averaged over positions where the window fits
//! entirely inside the image.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::TensorBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub mae: f64,
    /// `None` is the +infinity sentinel for identical images.
    pub psnr: Option<f64>,
    pub ssim: f64,
}

/// Mean absolute error over all pixels.
pub fn mae(a: &TensorBuffer, b: &TensorBuffer) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs())
        .sum();
    Ok(sum / a.len() as f64)
}

/// Peak signal-to-noise ratio, `10 log10(range^2 / MSE)` in dB.
pub fn psnr(a: &TensorBuffer, b: &TensorBuffer, data_range: f64) -> Result<Option<f64>> {
    a.ensure_same_shape(b)?;
    debug_assert!(data_range > 0.0);
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(None);
    }
    Ok(Some(10.0 * (data_range * data_range / mse).log10()))
}

const SSIM_RADIUS: usize = 5; // 11x11 window
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Structural similarity of two 2-d images with values in `[0, 1]`.
///
/// Images smaller than the 11x11 window fall back to a single uniform
/// global window with a warning.
pub fn ssim(a: &TensorBuffer, b: &TensorBuffer) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let shape = a.shape();
    let (h, w) = (shape[0], shape[1]);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let win = 2 * SSIM_RADIUS + 1;

    if h < win || w < win {
        log::warn!("image {h}x{w} smaller than the {win}x{win} SSIM window; using one global window");
        let n = a.len() as f64;
        let ux = a.data().iter().sum::<f64>() / n;
        let uy = b.data().iter().sum::<f64>() / n;
        let mut vx = 0.0;
        let mut vy = 0.0;
        let mut cov = 0.0;
        for (&x, &y) in a.data().iter().zip(b.data()) {
            vx += (x - ux) * (x - ux);
            vy += (y - uy) * (y - uy);
            cov += (x - ux) * (y - uy);
        }
        vx /= n;
        vy /= n;
        cov /= n;
        return Ok(((2.0 * ux * uy + c1) * (2.0 * cov + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2)));
    }

    // normalized separable Gaussian taps
    let kernel: Vec<f64> = {
        let raw: Vec<f64> = (0..win)
            .map(|i| {
                let d = i as f64 - SSIM_RADIUS as f64;
                (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
            })
            .collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    };

    // weighted windowed moments via separable filtering, valid region only
    let filter = |img: &TensorBuffer, other: Option<&TensorBuffer>| -> Vec<f64> {
        // horizontal pass over products, then vertical pass
        let mut tmp = vec![0.0; h * (w - win + 1)];
        for y in 0..h {
            for x in 0..w - win + 1 {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let v = match other {
                        None => img.at2(y, x + k),
                        Some(o) => img.at2(y, x + k) * o.at2(y, x + k),
                    };
                    acc += kv * v;
                }
                tmp[y * (w - win + 1) + x] = acc;
            }
        }
        let ow = w - win + 1;
        let oh = h - win + 1;
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    acc += kv * tmp[(y + k) * ow + x];
                }
                out[y * ow + x] = acc;
            }
        }
        out
    };

    let mu_a = filter(a, None);
    let mu_b = filter(b, None);
    let raw_aa = filter(a, Some(a));
    let raw_bb = filter(b, Some(b));
    let raw_ab = filter(a, Some(b));

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ux, uy) = (mu_a[i], mu_b[i]);
        let vx = raw_aa[i] - ux * ux;
        let vy = raw_bb[i] - uy * uy;
        let cov = raw_ab[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// All three metrics for one prediction/target pair (data range 1).
pub fn image_metrics(prediction: &TensorBuffer, target: &TensorBuffer) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        mae: mae(prediction, target)?,
        psnr: psnr(prediction, target, 1.0)?,
        ssim: ssim(prediction, target)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// LCG mirrored from the oracle-generation script: the frozen SSIM
    /// reference values below were produced by scikit-image's
    /// `structural_similarity` (win 11, sigma 1.5, gaussian weights, no
    /// sample covariance, data range 1) on bit-identical images.
    struct Lcg(u64);

    impl Lcg {
        fn next_f64(&mut self) -> f64 {
            self.0 = self
                .0
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((self.0 >> 11) as f64) / (1u64 << 53) as f64
        }
    }

    fn lcg_image(lcg: &mut Lcg, h: usize, w: usize, f: impl Fn(f64) -> f64) -> TensorBuffer {
        TensorBuffer::new(vec![h, w], (0..h * w).map(|_| f(lcg.next_f64())).collect()).unwrap()
    }

    #[test]
    fn identical_images_hit_the_sentinels() {
        let mut lcg = Lcg(5);
        let img = lcg_image(&mut lcg, 16, 16, |u| u);
        let m = image_metrics(&img, &img).unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.psnr, None);
        assert_eq!(m.ssim, 1.0);
    }

    #[test]
    fn mae_fixtures() {
        let zero = TensorBuffer::zeros(&[4, 4]);
        let one = TensorBuffer::filled(&[4, 4], 1.0);
        assert_eq!(mae(&zero, &one).unwrap(), 1.0);
        // 2x2 case: a = (0,0,1,1), b = (1,0,1,0) -> mean |diff| = 0.5
        let a = TensorBuffer::new(vec![2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let b = TensorBuffer::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(mae(&a, &b).unwrap(), 0.5);
        assert!(mae(&a, &zero).is_err());
    }

    #[test]
    fn psnr_formula_fixtures() {
        // 100 pixels each differing by 0.1: MSE = 0.01 -> 20 dB at range 1
        let a = TensorBuffer::zeros(&[10, 10]);
        let b = TensorBuffer::filled(&[10, 10], 0.1);
        let p = psnr(&a, &b, 1.0).unwrap().unwrap();
        assert!((p - 20.0).abs() < 1e-12);
        // doubling the range adds exactly 20 log10(2) dB
        let p2 = psnr(&a, &b, 2.0).unwrap().unwrap();
        assert!((p2 - p - 20.0 * 2.0f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_reference_oracle_on_random_pair() {
        let mut lcg = Lcg(7);
        let a = lcg_image(&mut lcg, 24, 24, |u| u);
        let b = lcg_image(&mut lcg, 24, 24, |u| u);
        let s = ssim(&a, &b).unwrap();
        assert!(
            (s - (-0.038509772490153)).abs() < 1e-6,
            "ssim {s} off the frozen reference"
        );
        // same corpus pins down MAE as a cross-check
        assert!((mae(&a, &b).unwrap() - 0.340245402456869).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_reference_oracle_on_shifted_midrange_image() {
        let mut lcg = Lcg(99);
        let a = lcg_image(&mut lcg, 32, 32, |u| 0.2 + 0.5 * u);
        let b = a.map(|v| v + 0.1);
        let s = ssim(&a, &b).unwrap();
        assert!(
            (s - 0.979652913479279).abs() < 1e-6,
            "ssim {s} off the frozen reference"
        );
    }

    #[test]
    fn anticorrelated_halves_score_below_half() {
        let mut data = vec![0.0; 24 * 24];
        for y in 0..24 {
            for x in 12..24 {
                data[y * 24 + x] = 1.0;
            }
        }
        let a = TensorBuffer::new(vec![24, 24], data).unwrap();
        let b = a.map(|v| 1.0 - v);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.5, "anticorrelated structure must score low, got {s}");
        assert!(
            (s - (-0.188898211526544)).abs() < 1e-6,
            "ssim {s} off the frozen reference"
        );
    }

    #[test]
    fn ssim_gradient_with_noise_matches_reference() {
        let mut lcg = Lcg(1234);
        let a = TensorBuffer::new(
            vec![24, 24],
            (0..24 * 24)
                .map(|i| {
                    let (y, x) = (i / 24, i % 24);
                    (y as f64 + 2.0 * x as f64) / (3.0 * 23.0)
                })
                .collect(),
        )
        .unwrap();
        let b = TensorBuffer::new(
            vec![24, 24],
            a.data()
                .iter()
                .map(|v| (v + 0.05 * lcg.next_f64()).clamp(0.0, 1.0))
                .collect(),
        )
        .unwrap();
        let s = ssim(&a, &b).unwrap();
        assert!(
            (s - 0.964151855746745).abs() < 1e-6,
            "ssim {s} off the frozen reference"
        );
    }

    #[test]
    fn tiny_image_falls_back_to_global_window() {
        let a = TensorBuffer::filled(&[6, 6], 0.4);
        let b = TensorBuffer::filled(&[6, 6], 0.4);
        assert_eq!(ssim(&a, &b).unwrap(), 1.0);
        let c = TensorBuffer::new(
            vec![6, 6],
            (0..36).map(|i| (i % 2) as f64).collect(),
        )
        .unwrap();
        let s = ssim(&c, &c.map(|v| 1.0 - v)).unwrap();
        assert!(s < 0.5);
    }

    proptest! {
        // triangle sanity for MAE on random small images
        #[test]
        fn mae_triangle_inequality(seed in any::<u64>()) {
            let mut lcg = Lcg(seed);
            let a = lcg_image(&mut lcg, 8, 8, |u| u);
            let b = lcg_image(&mut lcg, 8, 8, |u| u);
            let c = lcg_image(&mut lcg, 8, 8, |u| u);
            let ac = mae(&a, &c).unwrap();
            let ab = mae(&a, &b).unwrap();
            let bc = mae(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        // increasing noise amplitude strictly decreases PSNR
        #[test]
        fn psnr_decreases_with_noise_amplitude(seed in any::<u64>(), amp in 0.01f64..0.4) {
            let mut lcg = Lcg(seed);
            let base = lcg_image(&mut lcg, 8, 8, |u| 0.5 * u + 0.25);
            let noise = lcg_image(&mut lcg, 8, 8, |u| u - 0.5);
            let n1 = base.zip_map(&noise, |b, n| b + amp * n).unwrap();
            let n2 = base.zip_map(&noise, |b, n| b + 2.0 * amp * n).unwrap();
            let p1 = psnr(&base, &n1, 1.0).unwrap().unwrap();
            let p2 = psnr(&base, &n2, 1.0).unwrap().unwrap();
            prop_assert!(p2 < p1);
        }
    }
}
