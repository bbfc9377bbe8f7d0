//! Joint-quality measurements from the six keypoints.
//!
//! `d_h` uses K1/K2, `d_i` uses K3/K4, `d_b` uses K5/K6. Head height and bottom
//! thickness are vertical distances, interlock is horizontal.

use serde::{Deserialize, Serialize};

use crate::{Error, KeypointSet, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementReport {
    /// Positive when the head stands proud of the sheet surface.
    pub head_height_mm: f64,
    pub interlock_mm: f64,
    pub bottom_thickness_mm: f64,
}

/// One line of the `measure` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeasurement {
    pub id: String,
    pub d_h_mm: f64,
    pub d_i_mm: f64,
    pub d_b_mm: f64,
}

impl SampleMeasurement {
    pub fn new(id: impl Into<String>, r: &MeasurementReport) -> Self {
        Self { id: id.into(), d_h_mm: r.head_height_mm, d_i_mm: r.interlock_mm, d_b_mm: r.bottom_thickness_mm }
    }
}

pub fn head_height(kps: &KeypointSet, pitch: f64) -> f64 {
    (kps[1].y - kps[0].y) * pitch
}

pub fn interlock(kps: &KeypointSet, pitch: f64) -> f64 {
    (kps[3].x - kps[2].x).abs() * pitch
}

pub fn bottom_thickness(kps: &KeypointSet, pitch: f64) -> Result<f64> {
    let (y5, y6) = (kps[4].y, kps[5].y);
    if y6 < y5 {
        return Err(Error::InvertedPair { y5, y6 });
    }
    Ok((y6 - y5) * pitch)
}

pub fn measure_all(kps: &KeypointSet, pitch: f64) -> Result<MeasurementReport> {
    if !(pitch > 0.0 && pitch.is_finite()) {
        return Err(Error::NonpositiveScale(pitch));
    }
    Ok(MeasurementReport {
        head_height_mm: head_height(kps, pitch),
        interlock_mm: interlock(kps, pitch),
        bottom_thickness_mm: bottom_thickness(kps, pitch)?,
    })
}
