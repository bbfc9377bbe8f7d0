use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of keypoints annotated on every joint cross-section.
pub const NUM_KEYPOINTS: usize = 6;

/// Sub-pixel image position. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// The six joint keypoints, ordered K1..K6:
///
/// | index | keypoint | role |
/// |---|---|---|
/// | 0 | K1 rivet-head top point | head height (with K2) |
/// | 1 | K2 adjacent sheet-surface point | head height |
/// | 2 | K3 rivet-flare extremum | interlock (with K4) |
/// | 3 | K4 pierced top-sheet edge | interlock |
/// | 4 | K5 lowest interior point of the joint | bottom thickness (with K6) |
/// | 5 | K6 bottom-surface point below K5 | bottom thickness |
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct KeypointSet(pub [Point; NUM_KEYPOINTS]);

impl KeypointSet {
    pub fn new(points: [Point; NUM_KEYPOINTS]) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Schema(format!("non-finite keypoint ({}, {})", p.x, p.y)));
        }
        Ok(Self(points))
    }

    pub fn from_slice(points: &[Point]) -> Result<Self> {
        let arr: [Point; NUM_KEYPOINTS] = points.try_into().map_err(|_| {
            Error::Schema(format!("expected {NUM_KEYPOINTS} keypoints, found {}", points.len()))
        })?;
        Self::new(arr)
    }

    pub fn points(&self) -> &[Point; NUM_KEYPOINTS] {
        &self.0
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Self {
        Self(self.0.map(f))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        self.map(|p| Point::new(p.x + dx, p.y + dy))
    }
}

impl std::ops::Index<usize> for KeypointSet {
    type Output = Point;
    fn index(&self, i: usize) -> &Point {
        &self.0[i]
    }
}

impl TryFrom<Vec<Point>> for KeypointSet {
    type Error = Error;
    fn try_from(v: Vec<Point>) -> Result<Self> {
        Self::from_slice(&v)
    }
}

impl From<KeypointSet> for Vec<Point> {
    fn from(k: KeypointSet) -> Self {
        k.0.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_as_nested_pairs() {
        let k = KeypointSet::new([Point::new(1.5, 2.0); 6]).unwrap();
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, "[[1.5,2.0],[1.5,2.0],[1.5,2.0],[1.5,2.0],[1.5,2.0],[1.5,2.0]]");
        let back: KeypointSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn rejects_wrong_count() {
        let r: std::result::Result<KeypointSet, _> = serde_json::from_str("[[0,0],[1,1],[2,2],[3,3],[4,4]]");
        assert!(r.is_err());
    }
}
