//! Gaussian heatmap targets and peak decoding.

use crate::{Error, KeypointSet, Point, Result, NUM_KEYPOINTS};

/// Per-keypoint maps over an `height`×`width` grid, stored map-major then
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    width: usize,
    height: usize,
    count: usize,
    data: Vec<f32>,
    /// Width of the Gaussians for encoded targets.
    pub sigma_px: Option<f64>,
}

impl HeatmapStack {
    pub fn from_vec(count: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != count * height * width || count == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!("{} values for {count}×{height}×{width} heatmaps", data.len())));
        }
        Ok(Self { width, height, count, data, sigma_px: None })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn map(&self, k: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[k * n..(k + 1) * n]
    }

    /// Value of map `k` at row `i`, column `j`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f32 {
        self.map(k)[i * self.width + j]
    }
}

/// Unnormalized Gaussians with peak 1 centred on each point; nothing is
/// renormalized where a Gaussian is cut by the border.
pub fn encode_points(points: &[Point], height: usize, width: usize, sigma: f64) -> Result<HeatmapStack> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let n = width * height;
    let mut data = vec![0.0f32; points.len() * n];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (k, p) in points.iter().enumerate() {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64) {
            return Err(Error::KeypointOutOfBounds { x: p.x, y: p.y, width, height });
        }
        let gx: Vec<f64> = (0..width).map(|j| (-(j as f64 - p.x).powi(2) * inv).exp()).collect();
        let map = &mut data[k * n..(k + 1) * n];
        for i in 0..height {
            let gy = (-(i as f64 - p.y).powi(2) * inv).exp();
            for (v, g) in map[i * width..(i + 1) * width].iter_mut().zip(&gx) {
                *v = (gy * g) as f32;
            }
        }
    }
    let mut stack = HeatmapStack::from_vec(points.len(), height, width, data)?;
    stack.sigma_px = Some(sigma);
    Ok(stack)
}

pub fn encode(keypoints: &KeypointSet, height: usize, width: usize, sigma: f64) -> Result<HeatmapStack> {
    encode_points(keypoints.points(), height, width, sigma)
}

/// Peak of one map: the first maximum in row-major order, optionally refined
/// by the centroid of its 3×3 neighbourhood. Returns the point and peak value.
///
/// The neighbourhood minimum is subtracted before taking the centroid; the
/// plain centroid is biased towards the window centre by the Gaussian tails.
pub fn decode_map(map: &[f32], height: usize, width: usize, subpixel: bool) -> (Point, f32) {
    let mut best = 0;
    for (idx, &v) in map.iter().enumerate() {
        if v > map[best] {
            best = idx;
        }
    }
    let (i, j) = (best / width, best % width);
    let peak = map[best];
    let argmax = Point::new(j as f64, i as f64);
    if !subpixel {
        return (argmax, peak);
    }
    let rows = i.saturating_sub(1)..=(i + 1).min(height - 1);
    let cols = j.saturating_sub(1)..=(j + 1).min(width - 1);
    let mut floor = f64::INFINITY;
    for r in rows.clone() {
        for c in cols.clone() {
            floor = floor.min(map[r * width + c] as f64);
        }
    }
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for r in rows {
        for c in cols.clone() {
            let w = map[r * width + c] as f64 - floor;
            sw += w;
            sx += w * c as f64;
            sy += w * r as f64;
        }
    }
    if sw > 0.0 {
        (Point::new(sx / sw, sy / sw), peak)
    } else {
        (argmax, peak)
    }
}

/// Decodes every map. Confidence is the raw peak value.
pub fn decode_all(heatmaps: &HeatmapStack, subpixel: bool) -> (Vec<Point>, Vec<f32>) {
    (0..heatmaps.count)
        .map(|k| decode_map(heatmaps.map(k), heatmaps.height, heatmaps.width, subpixel))
        .unzip()
}

/// [`decode_all`] for a stack of exactly six maps.
pub fn decode(heatmaps: &HeatmapStack, subpixel: bool) -> Result<(KeypointSet, [f32; NUM_KEYPOINTS])> {
    let (points, conf) = decode_all(heatmaps, subpixel);
    let kps = KeypointSet::from_slice(&points)?;
    let conf: [f32; NUM_KEYPOINTS] = conf.try_into().expect("six maps");
    Ok((kps, conf))
}
