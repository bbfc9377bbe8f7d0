//! Training-time augmentation: random affine warp, Gaussian blur, clipping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::affine::Affine2;
use crate::raster::gaussian_kernel;
use crate::rng::{derive_seed, rng_from};
use crate::{Error, KeypointSet, Raster, Result};

pub const SCALE_RANGE: (f64, f64) = (0.8, 1.1);
pub const MAX_TRANSLATE_PX: f64 = 5.0;
pub const MAX_SHEAR_DEG: f64 = 3.0;
pub const MAX_ROTATE_DEG: f64 = 2.0;
pub const BLUR_KERNELS: [usize; 2] = [5, 7];
pub const BLUR_SIGMA: f64 = 20.0;
pub const BLUR_PROBABILITY: f64 = 0.5;
/// Parameter draws tried before falling back to the identity.
pub const MAX_AUGMENT_TRIES: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub scale: f64,
    pub translate_x: f64,
    pub translate_y: f64,
    pub shear_deg: f64,
    pub rotate_deg: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub blur_enabled: bool,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        scale: 1.0,
        translate_x: 0.0,
        translate_y: 0.0,
        shear_deg: 0.0,
        rotate_deg: 0.0,
        blur_kernel: 5,
        blur_sigma: BLUR_SIGMA,
        blur_enabled: false,
    };

    /// Scale, then shear, then rotation, all about the image centre, then translation.
    pub fn matrix(&self, width: usize, height: usize) -> Affine2 {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        Affine2::translation(self.translate_x, self.translate_y)
            .compose(&Affine2::translation(cx, cy))
            .compose(&Affine2::rotation(self.rotate_deg.to_radians()))
            .compose(&Affine2::shear_x(self.shear_deg.to_radians()))
            .compose(&Affine2::scaling(self.scale))
            .compose(&Affine2::translation(-cx, -cy))
    }
}

pub fn sample_params(seed: u64) -> AugmentParams {
    let mut rng = rng_from(seed);
    let sym = |rng: &mut rand_chacha::ChaCha8Rng, m: f64| rng.random_range(-m..=m);
    let scale = rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1);
    let translate_x = sym(&mut rng, MAX_TRANSLATE_PX);
    let translate_y = sym(&mut rng, MAX_TRANSLATE_PX);
    let shear_deg = sym(&mut rng, MAX_SHEAR_DEG);
    let rotate_deg = sym(&mut rng, MAX_ROTATE_DEG);
    let blur_kernel = BLUR_KERNELS[rng.random_range(0..BLUR_KERNELS.len())];
    let blur_enabled = rng.random_bool(BLUR_PROBABILITY);
    AugmentParams { scale, translate_x, translate_y, shear_deg, rotate_deg, blur_kernel, blur_sigma: BLUR_SIGMA, blur_enabled }
}

/// Warps image and keypoints with the same affine, blurs the image if enabled
/// and clips it to `[-1, 1]`.
pub fn apply(image: &Raster, keypoints: &KeypointSet, params: &AugmentParams) -> Result<(Raster, KeypointSet)> {
    let (w, h) = (image.width(), image.height());
    let m = params.matrix(w, h);
    let mapped = keypoints.map(|p| m.apply(p));
    if let Some(index) = mapped
        .points()
        .iter()
        .position(|p| !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (w - 1) as f64 && p.y <= (h - 1) as f64))
    {
        return Err(Error::KeypointEjected { index });
    }

    let mut out = if m.is_identity() {
        image.clone()
    } else {
        let inv = m.inverse().ok_or_else(|| Error::Config("degenerate augmentation matrix".into()))?;
        let mut out = Raster::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..w {
                let src = inv.apply(crate::Point::new(x as f64, y as f64));
                out.set(x, y, image.sample_bilinear(src.x, src.y));
            }
        }
        out
    };
    if params.blur_enabled {
        out = out.convolve_separable(&gaussian_kernel(params.blur_kernel, params.blur_sigma));
    }
    out.clamp(-1.0, 1.0);
    Ok((out, mapped))
}

/// Draws parameters from `seed` until the keypoints stay in frame; after
/// [`MAX_AUGMENT_TRIES`] ejections the identity is used.
pub fn augment_sample(image: &Raster, keypoints: &KeypointSet, seed: u64) -> Result<(Raster, KeypointSet, AugmentParams)> {
    for attempt in 0..MAX_AUGMENT_TRIES {
        let params = sample_params(derive_seed(seed, attempt));
        match apply(image, keypoints, &params) {
            Ok((img, kps)) => return Ok((img, kps, params)),
            Err(Error::KeypointEjected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let (img, kps) = apply(image, keypoints, &AugmentParams::IDENTITY)?;
    Ok((img, kps, AugmentParams::IDENTITY))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::decode_map;
    use crate::Point;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Raster {
        let data = (0..w * h).map(|i| ((i % w) as f32 / w as f32) * 1.8 - 0.9 + 0.1 * ((i / w) as f32 / h as f32)).collect();
        Raster::from_vec(w, h, data).unwrap()
    }

    fn kps(p: Point) -> KeypointSet {
        KeypointSet::new([p; 6]).unwrap()
    }

    #[test]
    fn identity_is_bit_exact() {
        let img = ramp(40, 30);
        let k = kps(Point::new(12.25, 7.5));
        let (out, k2) = apply(&img, &k, &AugmentParams::IDENTITY).unwrap();
        assert_eq!(out, img);
        assert_eq!(k2, k);
    }

    #[test]
    fn pure_translation() {
        let img = Raster::new(224, 224, 0.0);
        let p = AugmentParams { translate_x: 5.0, ..AugmentParams::IDENTITY };
        let (_, k) = apply(&img, &kps(Point::new(100.0, 100.0)), &p).unwrap();
        assert!((k[0].x - 105.0).abs() < 1e-12 && (k[0].y - 100.0).abs() < 1e-12);
    }

    #[test]
    fn ejection_reported() {
        let img = Raster::new(64, 64, 0.0);
        let p = AugmentParams { translate_x: 5.0, ..AugmentParams::IDENTITY };
        assert!(matches!(apply(&img, &kps(Point::new(61.0, 5.0)), &p), Err(Error::KeypointEjected { index: 0 })));
    }

    #[test]
    fn parameter_ranges() {
        let mut kernels = [0usize; 2];
        let mut blurred = 0;
        for seed in 0..10_000 {
            let p = sample_params(seed);
            assert!(p.scale >= SCALE_RANGE.0 && p.scale <= SCALE_RANGE.1);
            assert!(p.translate_x.abs() <= MAX_TRANSLATE_PX && p.translate_y.abs() <= MAX_TRANSLATE_PX);
            assert!(p.shear_deg.abs() <= MAX_SHEAR_DEG && p.rotate_deg.abs() <= MAX_ROTATE_DEG);
            assert!(BLUR_KERNELS.contains(&p.blur_kernel));
            assert_eq!(p.blur_sigma, BLUR_SIGMA);
            kernels[(p.blur_kernel == 7) as usize] += 1;
            blurred += p.blur_enabled as usize;
        }
        assert!(kernels[0] > 4500 && kernels[1] > 4500);
        assert!(blurred > 4500 && blurred < 5500);
        assert_eq!(sample_params(3), sample_params(3));
    }

    #[test]
    fn delta_marker_follows_keypoint() {
        let (w, h) = (96, 96);
        let mut checked = 0;
        for seed in 0..200u64 {
            let p = AugmentParams { blur_enabled: false, ..sample_params(seed) };
            let q = Point::new(20.0 + (seed % 50) as f64, 70.0 - (seed % 40) as f64);
            let mut img = Raster::new(w, h, -1.0);
            img.set(q.x as usize, q.y as usize, 1.0);
            let Ok((out, k)) = apply(&img, &kps(q), &p) else { continue };
            let (found, _) = decode_map(out.data(), h, w, false);
            assert!((found.x - k[0].x).abs() <= 1.0 && (found.y - k[0].y).abs() <= 1.0, "seed {seed}");
            checked += 1;
        }
        assert!(checked >= 190);
    }

    #[test]
    fn blur_keeps_interior_mean() {
        let img = ramp(64, 64);
        for kernel in BLUR_KERNELS {
            let p = AugmentParams { blur_enabled: true, blur_kernel: kernel, ..AugmentParams::IDENTITY };
            let (out, _) = apply(&img, &kps(Point::new(30.0, 30.0)), &p).unwrap();
            let mean = |r: &Raster| {
                let mut s = 0.0;
                for y in 8..56 {
                    for x in 8..56 {
                        s += r.get(x, y) as f64;
                    }
                }
                s / (48.0 * 48.0)
            };
            let (a, b) = (mean(&img), mean(&out));
            assert!((a - b).abs() <= 0.01 * a.abs().max(1e-3), "{a} {b}");
        }
    }

    #[test]
    fn fallback_to_identity() {
        // corner keypoints of a tiny frame are ejected by almost every draw
        let img = Raster::new(3, 3, 0.0);
        let c = [Point::new(0.0, 0.0), Point::new(2.0, 2.0), Point::new(0.0, 2.0), Point::new(2.0, 0.0)];
        let k = KeypointSet::new([c[0], c[1], c[2], c[3], c[0], c[1]]).unwrap();
        let (_, k2, p) = augment_sample(&img, &k, 1).unwrap();
        assert_eq!(p, AugmentParams::IDENTITY);
        assert_eq!(k2, k);
    }

    proptest! {
        #[test]
        fn clip_is_idempotent(vals in prop::collection::vec(-3.0f32..3.0, 16)) {
            let mut a = Raster::from_vec(4, 4, vals).unwrap();
            a.clamp(-1.0, 1.0);
            let mut b = a.clone();
            b.clamp(-1.0, 1.0);
            prop_assert_eq!(a, b);
        }
    }
}
