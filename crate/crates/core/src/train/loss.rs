use crate::heatmap::HeatmapStack;
use crate::nn::{Scalar, PROB_EPS};
use crate::{Error, Result};

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean per-pixel binary cross-entropy; predictions are clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn bce_mean<T: Scalar>(pred: &[T], target: &[T]) -> f64 {
    let mut sum = 0.0;
    for (&p, &h) in pred.iter().zip(target) {
        let (p, h) = (clamp_prob(p.to_f64()), h.to_f64());
        sum -= h * p.ln() + (1.0 - h) * (1.0 - p).ln();
    }
    sum / pred.len() as f64
}

/// Binary cross-entropy over a batch of heatmap stacks, averaged over every
/// pixel of every map of every sample.
pub fn bce_loss(pred: &[HeatmapStack], target: &[HeatmapStack]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!("{} predicted stacks for {} targets", pred.len(), target.len())));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(target) {
        if (p.count(), p.height(), p.width()) != (t.count(), t.height(), t.width()) {
            return Err(Error::Shape(format!(
                "prediction {}×{}×{} vs target {}×{}×{}",
                p.count(),
                p.height(),
                p.width(),
                t.count(),
                t.height(),
                t.width()
            )));
        }
        sum += bce_mean(p.data(), t.data()) * p.data().len() as f64;
        n += p.data().len();
    }
    Ok(sum / n as f64)
}

/// Loss summed over the given logits (after the logistic and the clamp) and
/// its gradient with respect to the logits, scaled by `scale`. The gradient is
/// zero wherever the clamp is active.
pub fn bce_logits<T: Scalar>(logits: &[T], target: &[T], scale: f64, grad: &mut [T]) -> f64 {
    let mut sum = 0.0;
    for ((&z, &h), g) in logits.iter().zip(target).zip(grad.iter_mut()) {
        let p = 1.0 / (1.0 + (-z.to_f64()).exp());
        let pc = clamp_prob(p);
        let h = h.to_f64();
        sum -= h * pc.ln() + (1.0 - h) * (1.0 - pc).ln();
        *g = if p == pc { T::from_f64((p - h) * scale) } else { T::ZERO };
    }
    sum
}
