//! PCK, OKS and MPJPE over keypoint sets, pooled over all keypoints of all samples.

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::dataio::Manifest;
use crate::train::Predictions;
use crate::{Error, KeypointSet, Result};

pub const DEFAULT_PCK_THRESHOLDS: [f64; 2] = [10.0, 50.0];
pub const DEFAULT_OKS_K: f64 = 0.1;

fn check_lengths(pred: &[KeypointSet], gt: &[KeypointSet]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn distances<'a>(pred: &'a [KeypointSet], gt: &'a [KeypointSet]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(gt).flat_map(|(p, g)| p.points().iter().zip(g.points()).map(|(a, b)| a.distance(*b)))
}

/// Fraction of keypoints within `tau` pixels of ground truth (boundary included).
pub fn pck(pred: &[KeypointSet], gt: &[KeypointSet], tau: f64) -> Result<f64> {
    check_lengths(pred, gt)?;
    if !(tau > 0.0) {
        return Err(Error::Config(format!("PCK threshold must be positive, got {tau}")));
    }
    let (hit, n) = distances(pred, gt).fold((0usize, 0usize), |(h, n), d| (h + (d <= tau) as usize, n + 1));
    Ok(hit as f64 / n as f64)
}

/// Mean of `exp(−d² / (2 s² k²))` with `s` the per-sample scale.
pub fn oks(pred: &[KeypointSet], gt: &[KeypointSet], scales: &[f64], k: f64) -> Result<f64> {
    check_lengths(pred, gt)?;
    if scales.len() != gt.len() {
        return Err(Error::LengthMismatch { pred: scales.len(), gt: gt.len() });
    }
    if let Some(&s) = scales.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::NonpositiveScale(s));
    }
    if !(k > 0.0) {
        return Err(Error::NonpositiveScale(k));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for ((p, g), &s) in pred.iter().zip(gt).zip(scales) {
        let denom = 2.0 * s * s * k * k;
        for (a, b) in p.points().iter().zip(g.points()) {
            let d = a.distance(*b);
            sum += (-d * d / denom).exp();
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Mean Euclidean keypoint error in pixels.
pub fn mpjpe(pred: &[KeypointSet], gt: &[KeypointSet]) -> Result<f64> {
    check_lengths(pred, gt)?;
    let (sum, n) = distances(pred, gt).fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    Ok(sum / n as f64)
}

/// How per-keypoint scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// One average over every keypoint of every sample.
    #[default]
    Micro,
    /// Per-sample scores averaged over samples.
    Macro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `(tau, score)` in the order the thresholds were requested.
    pub pck_at: Vec<(f64, f64)>,
    pub mpjpe: f64,
    pub oks: f64,
    pub sample_count: usize,
    pub keypoint_count: usize,
}

impl MetricsReport {
    pub fn pck(&self, tau: f64) -> Option<f64> {
        self.pck_at.iter().find(|(t, _)| *t == tau).map(|&(_, s)| s)
    }
}

fn tau_key(tau: f64) -> String {
    if tau.fract() == 0.0 && tau.abs() < 1e15 {
        format!("{}", tau as i64)
    } else {
        format!("{tau}")
    }
}

struct PckMap<'a>(&'a [(f64, f64)]);

impl Serialize for PckMap<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (tau, score) in self.0 {
            m.serialize_entry(&tau_key(*tau), score)?;
        }
        m.end()
    }
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(5))?;
        m.serialize_entry("pck", &PckMap(&self.pck_at))?;
        m.serialize_entry("mpjpe", &self.mpjpe)?;
        m.serialize_entry("oks", &self.oks)?;
        m.serialize_entry("samples", &self.sample_count)?;
        m.serialize_entry("keypoints", &self.keypoint_count)?;
        m.end()
    }
}

/// Scores predictions against the manifest's ground truth in the stored-image frame.
pub fn evaluate(predictions: &Predictions, manifest: &Manifest, taus: &[f64], k: f64) -> Result<MetricsReport> {
    evaluate_pooled(predictions, manifest, taus, k, Pooling::Micro)
}

pub fn evaluate_pooled(predictions: &Predictions, manifest: &Manifest, taus: &[f64], k: f64, pooling: Pooling) -> Result<MetricsReport> {
    let mut pred = Vec::with_capacity(predictions.predictions.len());
    let mut gt = Vec::with_capacity(pred.capacity());
    let mut scales = Vec::with_capacity(pred.capacity());
    for p in &predictions.predictions {
        let s = manifest.get(&p.id).ok_or_else(|| Error::UnknownId(p.id.clone()))?;
        if !(s.head_radius_px > 0.0) {
            return Err(Error::MissingHeadRadius(p.id.clone()));
        }
        pred.push(p.keypoints.clone());
        gt.push(s.keypoints.clone());
        scales.push(s.head_radius_px);
    }
    check_lengths(&pred, &gt)?;
    let score = |f: &dyn Fn(&[KeypointSet], &[KeypointSet], &[f64]) -> Result<f64>| -> Result<f64> {
        match pooling {
            Pooling::Micro => f(&pred, &gt, &scales),
            Pooling::Macro => {
                let mut sum = 0.0;
                for i in 0..pred.len() {
                    sum += f(&pred[i..=i], &gt[i..=i], &scales[i..=i])?;
                }
                Ok(sum / pred.len() as f64)
            }
        }
    };
    let mut pck_at = Vec::with_capacity(taus.len());
    for &tau in taus {
        pck_at.push((tau, score(&|p, g, _| pck(p, g, tau))?));
    }
    Ok(MetricsReport {
        pck_at,
        mpjpe: score(&|p, g, _| mpjpe(p, g))?,
        oks: score(&|p, g, s| oks(p, g, s, k))?,
        sample_count: pred.len(),
        keypoint_count: crate::NUM_KEYPOINTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Point;
    use proptest::prelude::*;

    fn one(dists: [f64; 6]) -> (Vec<KeypointSet>, Vec<KeypointSet>) {
        let gt = KeypointSet::new([Point::new(50.0, 50.0); 6]).unwrap();
        let pred = KeypointSet::new(dists.map(|d| Point::new(50.0 + d, 50.0))).unwrap();
        (vec![pred], vec![gt])
    }

    #[test]
    fn pck_examples() {
        let (p, g) = one([2.0, 9.8, 15.0, 0.0, 0.0, 0.0]);
        assert!((pck(&p, &g, 10.0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let (p, g) = one([10.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(pck(&p, &g, 10.0).unwrap(), 1.0);
        assert_eq!(pck(&g, &g, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn oks_examples() {
        let (p, g) = one([5.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let single = oks(&p[..1], &g[..1], &[50.0], 0.1).unwrap();
        // five exact keypoints plus one at d = s·k
        assert!((single - (5.0 + (-0.5f64).exp()) / 6.0).abs() < 1e-12);
        let (p, g) = one([10.0; 6]);
        assert!((oks(&p, &g, &[50.0], 0.1).unwrap() - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(oks(&g, &g, &[50.0], 0.1).unwrap(), 1.0);
        assert!(matches!(oks(&p, &g, &[0.0], 0.1), Err(Error::NonpositiveScale(_))));
    }

    #[test]
    fn mpjpe_examples() {
        let (p, g) = one([3.0, 4.0, 5.0, 0.0, 0.0, 0.0]);
        assert_eq!(mpjpe(&p, &g).unwrap(), 2.0);
        let shifted: Vec<_> = g.iter().map(|k| k.translate(3.0, 4.0)).collect();
        assert_eq!(mpjpe(&shifted, &g).unwrap(), 5.0);
        assert_eq!(mpjpe(&g, &g).unwrap(), 0.0);
        assert!(matches!(mpjpe(&p, &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn report_json_layout() {
        let r = MetricsReport { pck_at: vec![(10.0, 0.9), (50.0, 1.0), (2.5, 0.1)], mpjpe: 3.0, oks: 0.8, sample_count: 4, keypoint_count: 6 };
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(text, r#"{"pck":{"10":0.9,"50":1.0,"2.5":0.1},"mpjpe":3.0,"oks":0.8,"samples":4,"keypoints":6}"#);
    }

    fn arb_sets(n: usize) -> impl Strategy<Value = Vec<KeypointSet>> {
        prop::collection::vec(prop::collection::vec((0.0f64..224.0, 0.0f64..224.0), 6), n).prop_map(|v| {
            v.into_iter()
                .map(|pts| KeypointSet::from_slice(&pts.into_iter().map(|(x, y)| Point::new(x, y)).collect::<Vec<_>>()).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn pck_monotone_in_tau(p in arb_sets(3), g in arb_sets(3), t in 1.0f64..100.0, dt in 0.0f64..50.0) {
            prop_assert!(pck(&p, &g, t).unwrap() <= pck(&p, &g, t + dt).unwrap());
        }

        #[test]
        fn oks_drops_when_errors_grow(p in arb_sets(2), g in arb_sets(2), f in 1.01f64..3.0) {
            // scale every error vector by f about the ground truth
            let far: Vec<KeypointSet> = p.iter().zip(&g).map(|(a, b)| {
                let pts: Vec<Point> = a.points().iter().zip(b.points())
                    .map(|(q, r)| Point::new(r.x + f * (q.x - r.x), r.y + f * (q.y - r.y))).collect();
                KeypointSet::from_slice(&pts).unwrap()
            }).collect();
            prop_assert!(oks(&far, &g, &[40.0, 40.0], 0.1).unwrap() <= oks(&p, &g, &[40.0, 40.0], 0.1).unwrap());
        }

        #[test]
        fn mpjpe_homogeneous(p in arb_sets(2), g in arb_sets(2), c in 0.1f64..5.0) {
            let scale = |v: &[KeypointSet]| -> Vec<KeypointSet> { v.iter().map(|k| k.map(|q| Point::new(c * q.x, c * q.y))).collect() };
            let a = mpjpe(&scale(&p), &scale(&g)).unwrap();
            let b = c * mpjpe(&p, &g).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }

        #[test]
        fn bounds(p in arb_sets(2), g in arb_sets(2)) {
            let v = pck(&p, &g, 10.0).unwrap();
            let o = oks(&p, &g, &[30.0, 30.0], 0.1).unwrap();
            prop_assert!((0.0..=1.0).contains(&v) && (0.0..=1.0).contains(&o));
            prop_assert!(mpjpe(&p, &g).unwrap() >= 0.0);
        }
    }
}
