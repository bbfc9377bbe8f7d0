//! CT-like corruption of clean phantom images.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::raster::{gaussian_kernel, gaussian_kernel_size};
use crate::rng::{derive_named, rng_from};
use crate::Raster;

/// Strengths of the corruption stages. A zero disables its stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    pub additive_noise_std: f32,
    pub speckle_std: f32,
    pub bias_field_amplitude: f32,
    /// Characteristic wavelength of the bias field, in pixels.
    pub bias_field_scale: f32,
    pub streak_count: u32,
    pub streak_amplitude: f32,
    /// Gain jitter around the image mean; gain is drawn from `1 ± contrast_jitter`.
    pub contrast_jitter: f32,
    pub blur_sigma_px: f32,
}

impl NoiseParams {
    /// The corruption used for the noisy (μCT-like) domain.
    pub fn ct_like() -> Self {
        Self {
            additive_noise_std: 0.05,
            speckle_std: 0.10,
            bias_field_amplitude: 0.06,
            bias_field_scale: 90.0,
            streak_count: 4,
            streak_amplitude: 0.15,
            contrast_jitter: 0.30,
            blur_sigma_px: 1.2,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            self.additive_noise_std,
            self.speckle_std,
            self.bias_field_amplitude,
            self.bias_field_scale,
            self.streak_amplitude,
            self.contrast_jitter,
            self.blur_sigma_px,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err("noise parameters must be finite and nonnegative".into());
        }
        if self.bias_field_amplitude > 0.0 && self.bias_field_scale <= 0.0 {
            return Err("bias_field_scale must be positive when the bias field is enabled".into());
        }
        Ok(())
    }
}

/// Applies, in order: contrast jitter, low-frequency bias field, streaks,
/// blur, multiplicative speckle, additive Gaussian noise, clipping to `[0, 1]`.
///
/// Each stage draws from its own seeded stream, so disabling one stage does not
/// change the random draws of the others.
pub fn corrupt(image: &Raster, params: &NoiseParams, seed: u64) -> Raster {
    let mut out = image.clone();
    let (w, h) = (out.width(), out.height());

    if params.contrast_jitter > 0.0 {
        let mut rng = rng_from(derive_named(seed, "contrast"));
        let gain = 1.0 + params.contrast_jitter * (2.0 * rng.random::<f32>() - 1.0);
        let mean = out.mean() as f32;
        out.map_inplace(|v| mean + (v - mean) * gain);
    }

    if params.bias_field_amplitude > 0.0 {
        let mut rng = rng_from(derive_named(seed, "bias"));
        const WAVES: usize = 4;
        let waves: Vec<(f32, f32, f32)> = (0..WAVES)
            .map(|_| {
                let angle = rng.random::<f32>() * std::f32::consts::TAU;
                let wavelength = params.bias_field_scale * (1.0 + rng.random::<f32>());
                let k = std::f32::consts::TAU / wavelength;
                let phase = rng.random::<f32>() * std::f32::consts::TAU;
                (k * angle.cos(), k * angle.sin(), phase)
            })
            .collect();
        let amp = params.bias_field_amplitude / (WAVES as f32).sqrt();
        for y in 0..h {
            for x in 0..w {
                let field: f32 = waves.iter().map(|&(kx, ky, ph)| (kx * x as f32 + ky * y as f32 + ph).cos()).sum();
                let v = out.get(x, y);
                out.set(x, y, v + amp * field);
            }
        }
    }

    if params.streak_count > 0 && params.streak_amplitude > 0.0 {
        let mut rng = rng_from(derive_named(seed, "streaks"));
        for _ in 0..params.streak_count {
            let px = rng.random::<f32>() * w as f32;
            let py = rng.random::<f32>() * h as f32;
            let angle = rng.random::<f32>() * std::f32::consts::PI;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let amp = sign * params.streak_amplitude * (0.5 + 0.5 * rng.random::<f32>());
            let width = 0.8 + 1.2 * rng.random::<f32>();
            let (nx, ny) = (-angle.sin(), angle.cos());
            for y in 0..h {
                for x in 0..w {
                    let d = (x as f32 - px) * nx + (y as f32 - py) * ny;
                    if d.abs() < 4.0 * width {
                        let v = out.get(x, y);
                        out.set(x, y, v + amp * (-d * d / (2.0 * width * width)).exp());
                    }
                }
            }
        }
    }

    if params.blur_sigma_px > 0.0 {
        let sigma = params.blur_sigma_px as f64;
        out = out.convolve_separable(&gaussian_kernel(gaussian_kernel_size(sigma), sigma));
    }

    if params.speckle_std > 0.0 {
        let mut rng = rng_from(derive_named(seed, "speckle"));
        out.data_mut().iter_mut().for_each(|v| {
            let z: f32 = StandardNormal.sample(&mut rng);
            *v *= 1.0 + params.speckle_std * z;
        });
    }

    if params.additive_noise_std > 0.0 {
        let mut rng = rng_from(derive_named(seed, "additive"));
        out.data_mut().iter_mut().for_each(|v| {
            let z: f32 = StandardNormal.sample(&mut rng);
            *v += params.additive_noise_std * z;
        });
    }

    out.clamp(0.0, 1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{render, sample_config};

    fn clean() -> Raster {
        render(&sample_config(2), 256).unwrap().0
    }

    #[test]
    fn zero_params_is_identity() {
        let img = clean();
        let out = corrupt(&img, &NoiseParams::default(), 9);
        assert_eq!(out, img);
    }

    #[test]
    fn deterministic_given_seed() {
        let img = clean();
        let p = NoiseParams::ct_like();
        assert_eq!(corrupt(&img, &p, 4), corrupt(&img, &p, 4));
        assert_ne!(corrupt(&img, &p, 4), corrupt(&img, &p, 5));
    }

    #[test]
    fn output_in_unit_range() {
        let img = clean();
        let p = NoiseParams { additive_noise_std: 0.5, streak_amplitude: 2.0, streak_count: 3, ..NoiseParams::ct_like() };
        let out = corrupt(&img, &p, 1);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn mean_abs_difference_grows_with_noise() {
        let img = clean();
        let mad = |std: f32| {
            let p = NoiseParams { additive_noise_std: std, ..Default::default() };
            let out = corrupt(&img, &p, 17);
            img.data().iter().zip(out.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / img.data().len() as f64
        };
        let (a, b, c) = (mad(0.01), mad(0.05), mad(0.1));
        assert!(a < b && b < c, "{a} {b} {c}");
    }
}
