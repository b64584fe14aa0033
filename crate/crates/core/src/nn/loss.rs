//! Scalar losses returning `(loss, d loss / d input)`.

use super::layers::softmax_rows;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy over all `N·K` logits, evaluated as
/// `max(z, 0) - z·y + ln(1 + e^{-|z|})`.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(logits, targets, "bce_with_logits")?;
    let count = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for (g, (&z, &y)) in grad.data_mut().iter_mut().zip(logits.data().iter().zip(targets.data())) {
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        *g = (super::layers::sigmoid(z) - y) / count;
    }
    Ok((loss / count, grad))
}

/// Mean squared error over every element.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(pred, target, "mse")?;
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = pred.clone();
    for (g, (&p, &t)) in grad.data_mut().iter_mut().zip(pred.data().iter().zip(target.data())) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

/// Mean softmax cross-entropy of `(N, K)` logits against class indices.
pub fn softmax_cross_entropy(logits: &Tensor, classes: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = logits.dims2()?;
    if classes.len() != n || classes.iter().any(|&c| c >= k) {
        return Err(Error::shape("softmax_cross_entropy: bad class indices"));
    }
    let probs = softmax_rows(logits)?;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (b, &c) in classes.iter().enumerate() {
        loss -= probs.data()[b * k + c].max(f64::MIN_POSITIVE).ln();
        grad.data_mut()[b * k + c] -= 1.0;
    }
    for g in grad.data_mut() {
        *g /= n as f64;
    }
    Ok((loss / n as f64, grad))
}
