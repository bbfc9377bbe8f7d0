//! Overlay images with ground-truth X marks and predicted dots, and
//! per-keypoint confidence panels.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use rivetkey::dataio::read_manifest;
use rivetkey::heatmap::HeatmapStack;
use rivetkey::nn::load_checkpoint;
use rivetkey::train::{predict_image, Predictions};
use rivetkey::{KeypointSet, Point, Raster};

use crate::{Failure, Outcome};

/// K1 red, K2 yellow, K3/K4 green, K5/K6 blue.
const COLORS: [[u8; 3]; 6] = [[230, 30, 30], [250, 220, 0], [20, 200, 60], [20, 200, 60], [40, 110, 255], [40, 110, 255]];

const PANEL_COLS: usize = 3;

fn gray_rgb(image: &Raster) -> RgbImage {
    RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let v = (image.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    })
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn draw_x(img: &mut RgbImage, p: Point, arm: i64, c: [u8; 3]) {
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    for d in -arm..=arm {
        for t in 0..2 {
            put(img, cx + d + t, cy + d, c);
            put(img, cx + d + t, cy - d, c);
        }
    }
}

fn draw_dot(img: &mut RgbImage, p: Point, r: f64, c: [u8; 3]) {
    let ri = r.ceil() as i64;
    let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if ((dx * dx + dy * dy) as f64) <= r * r {
                put(img, cx + dx, cy + dy, c);
            }
        }
    }
}

/// Black, red, yellow, white ramp.
fn heat(v: f32) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0) * 3.0;
    let ch = |t: f32| (t.clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([ch(v), ch(v - 1.0), ch(v - 2.0)])
}

fn panel(maps: &HeatmapStack) -> RgbImage {
    let (w, h) = (maps.width(), maps.height());
    let rows = maps.count().div_ceil(PANEL_COLS);
    let gap = 2;
    let mut img = RgbImage::from_pixel(
        (PANEL_COLS * w + (PANEL_COLS - 1) * gap) as u32,
        (rows * h + (rows - 1) * gap) as u32,
        Rgb([255, 255, 255]),
    );
    for k in 0..maps.count() {
        let (ox, oy) = ((k % PANEL_COLS) * (w + gap), (k / PANEL_COLS) * (h + gap));
        let map = maps.map(k);
        let peak = map.iter().copied().fold(f32::MIN_POSITIVE, f32::max);
        for i in 0..h {
            for j in 0..w {
                img.put_pixel((ox + j) as u32, (oy + i) as u32, heat(map[i * w + j] / peak));
            }
        }
        // colored strip identifying the keypoint
        for j in 0..w.min(12) {
            for i in 0..3 {
                img.put_pixel((ox + j) as u32, (oy + i) as u32, Rgb(COLORS[k % COLORS.len()]));
            }
        }
    }
    img
}

fn write_png(img: &RgbImage, path: &Path) -> rivetkey::Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|source| rivetkey::Error::Image { path: path.into(), source })?;
    rivetkey::io::write_atomic(path, &bytes)
}

fn overlay(image: &Raster, truth: &KeypointSet, pred: Option<&KeypointSet>) -> RgbImage {
    let mut img = gray_rgb(image);
    let scale = (image.width().max(image.height()) as f64 / 256.0).max(1.0);
    for (k, &p) in truth.points().iter().enumerate() {
        draw_x(&mut img, p, (4.0 * scale).round() as i64, COLORS[k]);
    }
    if let Some(pred) = pred {
        for (k, &p) in pred.points().iter().enumerate() {
            draw_dot(&mut img, p, 2.5 * scale, COLORS[k]);
        }
    }
    img
}

pub fn run(manifest: &Path, preds: Option<&Path>, ckpt: Option<&Path>, out: &Path, count: Option<usize>, subpixel: bool) -> Outcome {
    if count == Some(0) {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    let m = read_manifest(manifest)?;
    let preds = preds.map(Predictions::read).transpose()?;
    let net = ckpt.map(load_checkpoint).transpose()?.map(|(net, _)| net);
    let n = count.unwrap_or(m.len()).min(m.len());
    let mut panels = 0;
    for s in &m.samples[..n] {
        let image = Raster::read_png(&m.image_path(s))?;
        let mut predicted = match &preds {
            Some(p) => p.predictions.iter().find(|q| q.id == s.id).map(|q| q.keypoints.clone()),
            None => None,
        };
        if let Some(net) = &net {
            let (kps, _, maps, _) = predict_image(net, &image, subpixel)?;
            predicted.get_or_insert(kps);
            write_png(&panel(&maps), &out.join(format!("{}_heatmaps.png", s.id)))?;
            panels += 1;
        }
        write_png(&overlay(&image, &s.keypoints, predicted.as_ref()), &out.join(format!("{}_overlay.png", s.id)))?;
    }
    Ok(format!("render: {n} overlays, {panels} heatmap panels -> {}", out.display()))
}
