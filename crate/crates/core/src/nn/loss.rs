//! Scalar losses returning `(value, gradient w.r.t. the first argument)`.

use crate::error::Result;
use crate::tensor::Tensor;

/// Per-element mean squared error.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.same_shape(target)?;
    let n = pred.len() as f64;
    let mut grad = pred.clone();
    let mut total = 0.0;
    for (g, &t) in grad.data_mut().iter_mut().zip(target.data()) {
        let d = *g - t;
        total += d * d;
        *g = 2.0 * d / n;
    }
    Ok((total / n, grad))
}

/// Per-element mean absolute error; the subgradient at zero is zero.
pub fn mae(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    a.same_shape(b)?;
    let n = a.len() as f64;
    let mut grad = a.clone();
    let mut total = 0.0;
    for (g, &bv) in grad.data_mut().iter_mut().zip(b.data()) {
        let d = *g - bv;
        total += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((total / n, grad))
}

/// Numerically stable softmax of one logit row.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean softmax cross-entropy over a batch of logits `[n, k, 1, 1]`.
pub fn softmax_cross_entropy(logits: &Tensor, targets: &[usize]) -> (f64, Tensor) {
    let n = logits.n();
    assert_eq!(n, targets.len(), "one target per logit row");
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (s, &t) in targets.iter().enumerate() {
        let p = softmax(logits.sample(s));
        total -= p[t].max(f64::MIN_POSITIVE).ln();
        for (k, g) in grad.sample_mut(s).iter_mut().enumerate() {
            let onehot = if k == t { 1.0 } else { 0.0 };
            *g = (p[k] - onehot) / n as f64;
        }
    }
    (total / n as f64, grad)
}
