//! Weighted logistic loss and its first/second derivatives w.r.t. the
//! margin.

use crate::cohort::Label;

/// Hessians are floored here so leaf weights stay finite at saturated
/// probabilities.
pub const HESSIAN_FLOOR: f64 = 1e-16;

#[inline]
pub fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Gradient and hessian of the weighted logistic loss at margin `m`:
/// `g = w (p - y)`, `h = w p (1 - p)` with `w = pos_weight` for
/// positives and 1 otherwise.
#[inline]
pub fn logistic_grad_hess(label: Label, margin: f64, pos_weight: f64) -> (f64, f64) {
    let p = sigmoid(margin);
    let (y, w) = if label.is_positive() {
        (1.0, pos_weight)
    } else {
        (0.0, 1.0)
    };
    let g = w * (p - y);
    let h = (w * p * (1.0 - p)).max(HESSIAN_FLOOR);
    (g, h)
}

/// Weighted logistic loss `-w [y ln p + (1-y) ln(1-p)]`, evaluated in a
/// saturation-safe form.
#[inline]
pub fn logistic_loss(label: Label, margin: f64, pos_weight: f64) -> f64 {
    if label.is_positive() {
        pos_weight * softplus(-margin)
    } else {
        softplus(margin)
    }
}

/// Log-odds start margin from the weighted positive fraction.
pub fn base_score(labels: &[Label], pos_weight: f64) -> f64 {
    let pos = labels.iter().filter(|l| l.is_positive()).count() as f64;
    let neg = labels.len() as f64 - pos;
    (pos_weight * pos / neg).ln()
}
