use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from;

/// Sheet gauges (mm) the generator draws from for both sheets.
pub const SHEET_THICKNESSES_MM: [f64; 8] = [1.0, 1.2, 1.5, 1.6, 1.8, 2.0, 2.2, 2.5];

pub const DEFAULT_PIXEL_PITCH_MM: f64 = 0.05;

pub const HEAD_RADIUS_MM: (f64, f64) = (2.2, 2.8);
/// Shank radius as a fraction of the head radius.
pub const SHANK_FRACTION: (f64, f64) = (0.60, 0.72);
pub const HEAD_THICKNESS_MM: (f64, f64) = (0.5, 0.65);
pub const HEAD_OFFSET_MM: (f64, f64) = (-0.3, 0.3);
pub const INTERLOCK_MM: (f64, f64) = (0.0, 0.6);
/// Bottom remnant as a fraction of the bottom sheet thickness.
pub const REMNANT_FRACTION: (f64, f64) = (0.2, 0.6);
pub const DIE_BULGE_MM: (f64, f64) = (0.2, 0.8);
/// Extra coupon material beyond the deformed zone on each side.
pub const COUPON_MARGIN_MM: (f64, f64) = (0.6, 1.2);

pub const RIVET_LEVEL: (f32, f32) = (0.80, 0.95);
pub const SHEET_LEVEL: (f32, f32) = (0.45, 0.62);
pub const BACKGROUND_LEVEL: (f32, f32) = (0.05, 0.20);

/// Radial distance (mm) from the flare tip to the edge of the die bulge.
pub(crate) const DIE_SHOULDER_MM: f64 = 0.6;
/// Horizontal run (mm) of the top sheet's tongue beyond the flare tip.
pub(crate) const TONGUE_RUN_MM: f64 = 0.6;
/// Distance (mm) from the head edge to the sheet-surface keypoint K2.
pub(crate) const SURFACE_GAP_MM: f64 = 0.3;

/// Gray levels of the three materials, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialLevels {
    pub rivet: f32,
    pub sheet: f32,
    pub background: f32,
}

/// Parametric geometry of one phantom joint cross-section. Lengths in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub config_id: String,
    pub top_thickness_mm: f64,
    pub bottom_thickness_mm: f64,
    /// Positive when the head stands proud of the top sheet surface.
    pub head_offset_mm: f64,
    pub interlock_mm: f64,
    /// Remaining bottom-sheet material under the lowest rivet point.
    pub bottom_remnant_mm: f64,
    pub head_radius_mm: f64,
    pub shank_radius_mm: f64,
    pub head_thickness_mm: f64,
    /// Downward bulge of the bottom sheet's lower surface under the joint.
    pub die_bulge_mm: f64,
    /// Half width of the sheet coupon, measured from the rivet axis.
    pub coupon_half_width_mm: f64,
    pub material_levels: MaterialLevels,
    pub pixel_pitch_mm: f64,
}

impl JointConfig {
    /// Checks the geometric and contrast invariants; returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let lengths = [
            ("top_thickness_mm", self.top_thickness_mm),
            ("bottom_thickness_mm", self.bottom_thickness_mm),
            ("bottom_remnant_mm", self.bottom_remnant_mm),
            ("head_radius_mm", self.head_radius_mm),
            ("shank_radius_mm", self.shank_radius_mm),
            ("head_thickness_mm", self.head_thickness_mm),
            ("coupon_half_width_mm", self.coupon_half_width_mm),
            ("pixel_pitch_mm", self.pixel_pitch_mm),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.bottom_remnant_mm < self.bottom_thickness_mm) {
            return Err("bottom_remnant_mm must be below bottom_thickness_mm".into());
        }
        if !(self.interlock_mm >= 0.0) {
            return Err("interlock_mm must be nonnegative".into());
        }
        if !(self.die_bulge_mm >= 0.0) {
            return Err("die_bulge_mm must be nonnegative".into());
        }
        if !(self.head_radius_mm > self.shank_radius_mm) {
            return Err("head_radius_mm must exceed shank_radius_mm".into());
        }
        if self.head_thickness_mm - self.head_offset_mm >= self.top_thickness_mm {
            return Err("rivet head underside reaches below the top sheet".into());
        }
        if self.coupon_half_width_mm < self.die_radius_mm() + 0.2
            || self.coupon_half_width_mm < self.head_radius_mm + SURFACE_GAP_MM + 0.2
        {
            return Err("coupon too narrow for the joint".into());
        }
        let m = self.material_levels;
        for v in [m.rivet, m.sheet, m.background] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("gray level {v} outside [0, 1]"));
            }
        }
        let gaps = [(m.rivet - m.sheet).abs(), (m.rivet - m.background).abs(), (m.sheet - m.background).abs()];
        if gaps.iter().any(|&g| g < 0.1) {
            return Err("material gray levels must differ by at least 0.1".into());
        }
        Ok(())
    }

    pub(crate) fn die_radius_mm(&self) -> f64 {
        self.shank_radius_mm + self.interlock_mm + DIE_SHOULDER_MM
    }

    pub fn head_radius_px(&self) -> f64 {
        self.head_radius_mm / self.pixel_pitch_mm
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn uniform_f32(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    lo + (hi - lo) * rng.random::<f32>()
}

/// Draws a joint configuration. Identical seeds give identical configurations.
pub fn sample_config(seed: u64) -> JointConfig {
    let mut rng = rng_from(seed);
    let top = SHEET_THICKNESSES_MM[rng.random_range(0..SHEET_THICKNESSES_MM.len())];
    let bottom = SHEET_THICKNESSES_MM[rng.random_range(0..SHEET_THICKNESSES_MM.len())];
    let head_radius = uniform(&mut rng, HEAD_RADIUS_MM);
    let shank_radius = head_radius * uniform(&mut rng, SHANK_FRACTION);
    let head_thickness = uniform(&mut rng, HEAD_THICKNESS_MM);
    let head_offset = uniform(&mut rng, HEAD_OFFSET_MM);
    let interlock = uniform(&mut rng, INTERLOCK_MM);
    let remnant = bottom * uniform(&mut rng, REMNANT_FRACTION);
    let bulge = uniform(&mut rng, DIE_BULGE_MM);
    let margin = uniform(&mut rng, COUPON_MARGIN_MM);
    let die_radius = shank_radius + interlock + DIE_SHOULDER_MM;
    let coupon = (head_radius + SURFACE_GAP_MM + 0.3).max(die_radius + 0.4) + margin;
    let material_levels = MaterialLevels {
        rivet: uniform_f32(&mut rng, RIVET_LEVEL),
        sheet: uniform_f32(&mut rng, SHEET_LEVEL),
        background: uniform_f32(&mut rng, BACKGROUND_LEVEL),
    };
    JointConfig {
        config_id: format!("cfg-{seed:016x}"),
        top_thickness_mm: top,
        bottom_thickness_mm: bottom,
        head_offset_mm: head_offset,
        interlock_mm: interlock,
        bottom_remnant_mm: remnant,
        head_radius_mm: head_radius,
        shank_radius_mm: shank_radius,
        head_thickness_mm: head_thickness,
        die_bulge_mm: bulge,
        coupon_half_width_mm: coupon,
        material_levels,
        pixel_pitch_mm: DEFAULT_PIXEL_PITCH_MM,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_config() {
        assert_eq!(sample_config(0), sample_config(0));
        assert_ne!(sample_config(0), sample_config(1));
    }

    #[test]
    fn range_scan_over_sample_stream() {
        for seed in 0..10_000u64 {
            let c = sample_config(seed);
            c.validate().unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert!(SHEET_THICKNESSES_MM.contains(&c.top_thickness_mm));
            assert!(SHEET_THICKNESSES_MM.contains(&c.bottom_thickness_mm));
            let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
            assert!(within(c.head_radius_mm, HEAD_RADIUS_MM));
            assert!(within(c.shank_radius_mm / c.head_radius_mm, SHANK_FRACTION));
            assert!(within(c.head_thickness_mm, HEAD_THICKNESS_MM));
            assert!(within(c.head_offset_mm, HEAD_OFFSET_MM));
            assert!(within(c.interlock_mm, INTERLOCK_MM));
            assert!(within(c.bottom_remnant_mm / c.bottom_thickness_mm, REMNANT_FRACTION));
            assert!(within(c.die_bulge_mm, DIE_BULGE_MM));
            let m = c.material_levels;
            assert!(m.rivet >= RIVET_LEVEL.0 && m.rivet <= RIVET_LEVEL.1);
            assert!(m.sheet >= SHEET_LEVEL.0 && m.sheet <= SHEET_LEVEL.1);
            assert!(m.background >= BACKGROUND_LEVEL.0 && m.background <= BACKGROUND_LEVEL.1);
        }
    }

    #[test]
    fn validate_rejects_broken_invariants() {
        let mut c = sample_config(3);
        c.bottom_remnant_mm = c.bottom_thickness_mm;
        assert!(c.validate().is_err());
        let mut c = sample_config(3);
        c.shank_radius_mm = c.head_radius_mm;
        assert!(c.validate().is_err());
        let mut c = sample_config(3);
        c.material_levels.sheet = c.material_levels.background + 0.05;
        assert!(c.validate().is_err());
    }
}
