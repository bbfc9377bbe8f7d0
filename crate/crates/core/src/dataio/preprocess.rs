//! Crop → pad to square → uniform resize, and the matching coordinate transform.

use serde::{Deserialize, Serialize};

use crate::affine::Affine2;
use crate::raster::{gaussian_kernel, gaussian_kernel_size};
use crate::{Error, KeypointSet, Point, Raster, Result};

pub const DEFAULT_INPUT_SIZE: usize = 224;

/// Dilation applied around the detected joint extent.
pub const ROI_DILATION_PX: usize = 10;

/// Axis-aligned pixel rectangle `[x0, x0 + width) × [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn full(image: &Raster) -> Self {
        Self::new(0, 0, image.width(), image.height())
    }

    /// Whether `p` lies within the pixel centers spanned by the rectangle.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 as f64
            && p.y >= self.y0 as f64
            && p.x <= (self.x0 + self.width - 1) as f64
            && p.y <= (self.y0 + self.height - 1) as f64
    }

    fn fits(&self, image: &Raster) -> bool {
        self.width > 0 && self.height > 0 && self.x0 + self.width <= image.width() && self.y0 + self.height <= image.height()
    }
}

/// Maps stored-image coordinates to network-input coordinates and back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessTransform {
    pub roi: Roi,
    pub output_size: usize,
    /// Original → output.
    pub forward: Affine2,
}

impl PreprocessTransform {
    pub fn new(roi: Roi, output_size: usize) -> Self {
        let side = roi.width.max(roi.height) as f64;
        let pad_x = (side - roi.width as f64) / 2.0;
        let pad_y = (side - roi.height as f64) / 2.0;
        let s = output_size as f64 / side;
        let forward = Affine2::scaling(s).compose(&Affine2::translation(pad_x - roi.x0 as f64, pad_y - roi.y0 as f64));
        Self { roi, output_size, forward }
    }

    pub fn scale(&self) -> f64 {
        self.forward.a
    }

    pub fn apply(&self, p: Point) -> Point {
        self.forward.apply(p)
    }

    /// Output → original.
    pub fn inverse(&self) -> Affine2 {
        self.forward.inverse().expect("preprocess scale is positive")
    }

    pub fn invert(&self, p: Point) -> Point {
        self.inverse().apply(p)
    }
}

/// Gray level of the background: the mean of the border pixels falling in the
/// most populated of 256 intensity bins.
pub fn modal_border_intensity(image: &Raster) -> f32 {
    let (w, h) = (image.width(), image.height());
    let mut border = Vec::with_capacity(2 * (w + h));
    for x in 0..w {
        border.push(image.get(x, 0));
        border.push(image.get(x, h - 1));
    }
    for y in 1..h.saturating_sub(1) {
        border.push(image.get(0, y));
        border.push(image.get(w - 1, y));
    }
    let bin = |v: f32| ((v.clamp(0.0, 1.0) * 255.0).round()) as usize;
    let mut counts = [0usize; 256];
    for &v in &border {
        counts[bin(v)] += 1;
    }
    // first maximal bin, for determinism
    let mode = (0..256).fold(0, |best, b| if counts[b] > counts[best] { b } else { best });
    let (sum, n) = border.iter().filter(|&&v| bin(v) == mode).fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
    (sum / n as f64) as f32
}

/// Longest run of qualifying indices, bridging gaps of at most `max_gap`.
fn longest_run(flags: &[bool], max_gap: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut current: Option<(usize, usize)> = None;
    for (i, &on) in flags.iter().enumerate() {
        if !on {
            continue;
        }
        current = match current {
            Some((start, end)) if i - end <= max_gap + 1 => Some((start, i)),
            _ => Some((i, i)),
        };
        let (s, e) = current.unwrap();
        if best.map_or(true, |(bs, be)| e - s > be - bs) {
            best = Some((s, e));
        }
    }
    best
}

/// Locates the joint: pixels departing from the background level after a 5×5
/// box smoothing, reduced to the dominant band of rows and columns and dilated
/// by [`ROI_DILATION_PX`]. Falls back to the whole image when nothing stands out.
pub fn detect_roi(image: &Raster) -> Roi {
    let (w, h) = (image.width(), image.height());
    let bg = modal_border_intensity(image);
    let smooth = image.convolve_separable(&[0.2; 5]);
    let mut diffs: Vec<f32> = smooth.data().iter().map(|v| (v - bg).abs()).collect();
    let threshold = {
        let k = ((diffs.len() as f64 * 0.9) as usize).min(diffs.len() - 1);
        let (_, p90, _) = diffs.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
        (0.5 * *p90).max(0.05)
    };
    diffs.clear();

    let mut row_counts = vec![0usize; h];
    let mut col_counts = vec![0usize; w];
    for y in 0..h {
        for x in 0..w {
            if (smooth.get(x, y) - bg).abs() > threshold {
                row_counts[y] += 1;
                col_counts[x] += 1;
            }
        }
    }
    let rows: Vec<bool> = row_counts.iter().map(|&c| c >= 3.max(w / 20)).collect();
    let cols: Vec<bool> = col_counts.iter().map(|&c| c >= 3.max(h / 20)).collect();
    match (longest_run(&rows, 2), longest_run(&cols, 2)) {
        (Some((y0, y1)), Some((x0, x1))) => {
            let x0 = x0.saturating_sub(ROI_DILATION_PX);
            let y0 = y0.saturating_sub(ROI_DILATION_PX);
            let x1 = (x1 + ROI_DILATION_PX).min(w - 1);
            let y1 = (y1 + ROI_DILATION_PX).min(h - 1);
            Roi::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
        }
        _ => Roi::full(image),
    }
}

/// Crops `roi`, pads it symmetrically to a square with the background level and
/// rescales it to `size`×`size`.
pub fn preprocess_image(image: &Raster, roi: Roi, size: usize) -> Result<(Raster, PreprocessTransform)> {
    if !roi.fits(image) {
        return Err(Error::Config(format!("roi {roi:?} outside {}×{} image", image.width(), image.height())));
    }
    let transform = PreprocessTransform::new(roi, size);
    let side = roi.width.max(roi.height);
    let (ox, oy) = ((side - roi.width) / 2, (side - roi.height) / 2);
    let mut canvas = Raster::new(side, side, modal_border_intensity(image));
    for y in 0..roi.height {
        for x in 0..roi.width {
            canvas.set(ox + x, oy + y, image.get(roi.x0 + x, roi.y0 + y));
        }
    }
    let s = transform.scale();
    if s < 1.0 {
        let sigma = 0.5 * (1.0 / (s * s) - 1.0).sqrt();
        if sigma > 0.2 {
            canvas = canvas.convolve_separable(&gaussian_kernel(gaussian_kernel_size(sigma), sigma));
        }
    }
    // the affine pads by (side - width) / 2, which may be a half pixel more than `ox`
    let shift_x = (side - roi.width) as f64 / 2.0 - ox as f64;
    let shift_y = (side - roi.height) as f64 / 2.0 - oy as f64;
    let mut out = Raster::new(size, size, 0.0);
    for v in 0..size {
        for u in 0..size {
            out.set(u, v, canvas.sample_bilinear(u as f64 / s - shift_x, v as f64 / s - shift_y));
        }
    }
    Ok((out, transform))
}

/// [`preprocess_image`] plus the keypoint mapping.
pub fn preprocess(image: &Raster, keypoints: &KeypointSet, roi: Roi, size: usize) -> Result<(Raster, KeypointSet, PreprocessTransform)> {
    if let Some(p) = keypoints.points().iter().find(|p| !roi.contains(**p)) {
        return Err(Error::KeypointOutsideRoi { x: p.x, y: p.y });
    }
    let (out, transform) = preprocess_image(image, roi, size)?;
    Ok((out, keypoints.map(|p| transform.apply(p)), transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{render_full, sample_config};

    fn kps_at(p: Point) -> KeypointSet {
        KeypointSet::new([p; 6]).unwrap()
    }

    #[test]
    fn square_roi_halves() {
        let img = Raster::new(500, 500, 0.3);
        let roi = Roi::new(20, 30, 448, 448);
        let (out, k, _) = preprocess(&img, &kps_at(Point::new(20.0 + 224.0, 30.0 + 224.0)), roi, 224).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        assert_eq!(k[0], Point::new(112.0, 112.0));
    }

    #[test]
    fn wide_roi_is_padded_vertically() {
        let img = Raster::new(400, 200, 0.3);
        let roi = Roi::full(&img);
        let t = PreprocessTransform::new(roi, 224);
        assert!((t.scale() - 0.56).abs() < 1e-15);
        let p = t.apply(Point::new(0.0, 0.0));
        assert!(p.x.abs() < 1e-12 && (p.y - 56.0).abs() < 1e-12);
        assert_eq!(t.forward.a, t.forward.d);
        let (out, _) = preprocess_image(&img, roi, 224).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn inverse_recovers_keypoints() {
        let img = Raster::new(300, 260, 0.0);
        let roi = Roi::new(13, 7, 251, 180);
        let original = KeypointSet::new([
            Point::new(13.0, 7.0),
            Point::new(100.25, 80.5),
            Point::new(263.0, 186.0),
            Point::new(150.125, 100.0),
            Point::new(20.0, 150.75),
            Point::new(200.5, 9.0),
        ])
        .unwrap();
        let (_, mapped, t) = preprocess(&img, &original, roi, 224).unwrap();
        for (a, b) in original.points().iter().zip(mapped.points()) {
            let back = t.invert(*b);
            assert!((back.x - a.x).abs() < 1e-9 && (back.y - a.y).abs() < 1e-9);
        }
    }

    #[test]
    fn keypoint_outside_roi_rejected() {
        let img = Raster::new(100, 100, 0.0);
        let r = preprocess(&img, &kps_at(Point::new(5.0, 50.0)), Roi::new(10, 10, 80, 80), 64);
        assert!(matches!(r, Err(Error::KeypointOutsideRoi { .. })));
    }

    #[test]
    fn image_and_keypoints_move_together() {
        // a bright dot at a keypoint stays under the mapped keypoint
        let mut img = Raster::new(320, 200, 0.1);
        let p = Point::new(201.0, 77.0);
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                img.set((p.x as i32 + dx) as usize, (p.y as i32 + dy) as usize, 1.0);
            }
        }
        let (out, k, _) = preprocess(&img, &kps_at(p), Roi::new(10, 5, 300, 190), 224).unwrap();
        let (mut best, mut at) = (f32::MIN, (0, 0));
        for y in 0..224 {
            for x in 0..224 {
                if out.get(x, y) > best {
                    best = out.get(x, y);
                    at = (x, y);
                }
            }
        }
        assert!((at.0 as f64 - k[0].x).abs() <= 1.0 && (at.1 as f64 - k[0].y).abs() <= 1.0);
    }

    #[test]
    fn detected_roi_matches_rendered_extent() {
        for seed in 0..20 {
            let r = render_full(&sample_config(seed), 256).unwrap();
            let roi = detect_roi(&r.image);
            let (lo, hi) = r.bbox;
            let d = ROI_DILATION_PX as f64;
            assert!((roi.x0 as f64 - (lo.x - d).max(0.0)).abs() <= 3.0, "seed {seed}: {roi:?} {lo:?}");
            assert!((roi.y0 as f64 - (lo.y - d).max(0.0)).abs() <= 3.0, "seed {seed}: {roi:?} {lo:?}");
            assert!(((roi.x0 + roi.width - 1) as f64 - (hi.x + d).min(255.0)).abs() <= 3.0);
            assert!(((roi.y0 + roi.height - 1) as f64 - (hi.y + d).min(255.0)).abs() <= 3.0);
            assert!(r.keypoints.points().iter().all(|p| roi.contains(*p)));
        }
    }

    #[test]
    fn background_is_modal_border_level() {
        let c = sample_config(4);
        let (img, _) = crate::phantom::render(&c, 256).unwrap();
        assert!((modal_border_intensity(&img) - c.material_levels.background).abs() < 1e-6);
    }

    #[test]
    fn longest_run_bridges_small_gaps() {
        let f = |s: &str| s.chars().map(|c| c == '#').collect::<Vec<_>>();
        assert_eq!(longest_run(&f("..##..#.........####"), 2), Some((2, 6)));
        assert_eq!(longest_run(&f("##...#####"), 2), Some((5, 9)));
        assert_eq!(longest_run(&f("...."), 2), None);
    }
}
