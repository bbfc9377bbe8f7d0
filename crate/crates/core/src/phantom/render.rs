//! Analytic rendering of a joint cross-section.
//!
//! The joint is assembled from polygons (bottom sheet, the two halves of the
//! pierced top sheet, an optional head recess, the rivet). Each polygon is
//! rasterized through its signed distance so that every material boundary is
//! a 1-px linear ramp. Keypoints are polygon vertices, hence exact.

use crate::phantom::config::{JointConfig, SURFACE_GAP_MM, TONGUE_RUN_MM};
use crate::{Error, KeypointSet, Point, Raster, Result};

/// Minimum distance between the joint and every image border.
pub const FRAME_MARGIN_PX: f64 = 8.0;

pub const MIN_RENDER_SIZE: usize = 64;

struct Polygon {
    vertices: Vec<Point>,
    min: Point,
    max: Point,
}

impl Polygon {
    fn new(vertices: Vec<Point>) -> Self {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &vertices {
            min = Point::new(min.x.min(v.x), min.y.min(v.y));
            max = Point::new(max.x.max(v.x), max.y.max(v.y));
        }
        Self { vertices, min, max }
    }

    /// Mirror image about the vertical line `x = axis`.
    fn mirrored(&self, axis: f64) -> Self {
        Polygon::new(self.vertices.iter().map(|p| Point::new(2.0 * axis - p.x, p.y)).collect())
    }

    /// Signed distance, negative inside.
    fn signed_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        let mut best = f64::INFINITY;
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            best = best.min(segment_distance(p, a, b));
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        if inside {
            -best
        } else {
            best
        }
    }

    fn paint(&self, img: &mut Raster, level: f32) {
        let x0 = (self.min.x - 1.0).floor().max(0.0) as usize;
        let y0 = (self.min.y - 1.0).floor().max(0.0) as usize;
        let x1 = ((self.max.x + 1.0).ceil() as usize).min(img.width() - 1);
        let y1 = ((self.max.y + 1.0).ceil() as usize).min(img.height() - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = self.signed_distance(Point::new(x as f64, y as f64));
                let cover = (0.5 - d).clamp(0.0, 1.0) as f32;
                if cover > 0.0 {
                    let v = img.get(x, y);
                    img.set(x, y, v + (level - v) * cover);
                }
            }
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0) };
    p.distance(Point::new(a.x + t * abx, a.y + t * aby))
}

/// Rendered joint: the image, its keypoints and the joint's bounding box
/// (`min`, `max`, in pixels).
pub struct Rendering {
    pub image: Raster,
    pub keypoints: KeypointSet,
    pub bbox: (Point, Point),
}

/// Renders `config` into a `size`×`size` image and returns the analytic keypoints.
pub fn render(config: &JointConfig, size: usize) -> Result<(Raster, KeypointSet)> {
    render_full(config, size).map(|r| (r.image, r.keypoints))
}

pub fn render_full(config: &JointConfig, size: usize) -> Result<Rendering> {
    if size < MIN_RENDER_SIZE {
        return Err(Error::Config(format!("render size {size} below minimum {MIN_RENDER_SIZE}")));
    }
    config.validate().map_err(Error::Config)?;

    let px = |mm: f64| mm / config.pixel_pitch_mm;
    let head_r = px(config.head_radius_mm);
    let shank_r = px(config.shank_radius_mm);
    let head_t = px(config.head_thickness_mm);
    let offset = px(config.head_offset_mm);
    let interlock = px(config.interlock_mm);
    let top_t = px(config.top_thickness_mm);
    let bottom_t = px(config.bottom_thickness_mm);
    let remnant = px(config.bottom_remnant_mm);
    let bulge = px(config.die_bulge_mm);
    let half_w = px(config.coupon_half_width_mm);
    let die_r = px(config.die_radius_mm());

    // Vertical layout relative to the top sheet surface at y = 0.
    let y_head = -offset;
    let y_under = y_head + head_t;
    let y_iface = top_t;
    let y_bottom = top_t + bottom_t;
    let y_k6 = y_bottom + bulge;
    let y_k5 = y_k6 - remnant;
    let y_flare = y_iface + 0.65 * (y_k5 - y_iface);
    let y_k4 = y_iface + 0.3 * (y_flare - y_iface);

    let top_extent = y_head.min(0.0);
    let cx = (size as f64 - 1.0) / 2.0;
    let cy = (size as f64 - 1.0) / 2.0;
    let ys = cy - (top_extent + y_k6) / 2.0;

    let bbox = (Point::new(cx - half_w, ys + top_extent), Point::new(cx + half_w, ys + y_k6));
    let limit = size as f64 - 1.0 - FRAME_MARGIN_PX;
    if bbox.0.x < FRAME_MARGIN_PX || bbox.0.y < FRAME_MARGIN_PX || bbox.1.x > limit || bbox.1.y > limit {
        return Err(Error::GeometryOverflow { size });
    }

    let at = |dx: f64, y: f64| Point::new(cx + dx, ys + y);
    let k1 = at(-head_r, y_head);
    let k2 = at(-head_r - px(SURFACE_GAP_MM), 0.0);
    let k3 = at(-shank_r - interlock, y_flare);
    let k4 = at(-shank_r, y_k4);
    let k5 = at(0.0, y_k5);
    let k6 = at(0.0, y_k6);

    let levels = config.material_levels;
    let mut img = Raster::new(size, size, levels.background);

    let bottom_sheet = Polygon::new(vec![
        at(-half_w, y_iface),
        at(half_w, y_iface),
        at(half_w, y_bottom),
        at(die_r, y_bottom),
        at(0.6 * die_r, y_bottom + 0.55 * bulge),
        at(0.25 * die_r, y_bottom + 0.85 * bulge),
        k6,
        at(-0.25 * die_r, y_bottom + 0.85 * bulge),
        at(-0.6 * die_r, y_bottom + 0.55 * bulge),
        at(-die_r, y_bottom),
        at(-half_w, y_bottom),
    ]);
    bottom_sheet.paint(&mut img, levels.sheet);

    let tongue = shank_r + interlock + px(TONGUE_RUN_MM);
    let top_left = Polygon::new(vec![
        at(-half_w, 0.0),
        at(-shank_r, 0.0),
        k4,
        at(-tongue, y_iface),
        at(-half_w, y_iface),
    ]);
    top_left.paint(&mut img, levels.sheet);
    top_left.mirrored(cx).paint(&mut img, levels.sheet);

    if offset < 0.0 {
        let recess = Polygon::new(vec![at(-head_r, -1.0), at(head_r, -1.0), at(head_r, y_head), at(-head_r, y_head)]);
        recess.paint(&mut img, levels.background);
    }

    let left_half = [k1, at(-head_r, y_under), at(-shank_r, y_under), k4, k3];
    let mut rivet: Vec<Point> = left_half.to_vec();
    rivet.push(k5);
    rivet.extend(left_half.iter().rev().map(|p| Point::new(2.0 * cx - p.x, p.y)));
    Polygon::new(rivet).paint(&mut img, levels.rivet);

    let keypoints = KeypointSet::new([k1, k2, k3, k4, k5, k6])?;
    Ok(Rendering { image: img, keypoints, bbox })
}
