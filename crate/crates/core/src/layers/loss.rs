use alloc::vec;
use alloc::vec::Vec;

use super::expect_rank;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient
/// `(softmax - onehot) / batch` w.r.t. the logits.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    expect_rank("softmax_xent", logits, 2)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent labels",
            expected: vec![n],
            found: vec![labels.len()],
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: k,
        });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| libm::exp(z - max)).sum();
        let log_norm = max + libm::log(sum_exp);
        loss += log_norm - row[label];
        for (j, &z) in row.iter().enumerate() {
            let p = libm::exp(z - log_norm);
            let onehot = if j == label { 1.0 } else { 0.0 };
            grad.push((p - onehot) / n as f64);
        }
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "softmax_xent" });
    }
    Ok((loss, Tensor::new(vec![n, k], grad)?))
}

/// Index of the largest entry in each row (first one on ties).
pub fn argmax_rows(t: &Tensor) -> Result<Vec<usize>> {
    expect_rank("argmax_rows", t, 2)?;
    let k = t.shape()[1];
    Ok(t.data()
        .chunks_exact(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0
        })
        .collect())
}
