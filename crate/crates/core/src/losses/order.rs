//! Order-prediction baseline: softmax cross-entropy over segment permutations.

use super::LossGrad;
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, softmax};

/// Cross-entropy of `logits` against permutation index `target`; returns the
/// loss and `dL/dlogits`.
pub fn order_prediction_loss(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::shape(format!("order prediction needs >= 2 classes, got {}", logits.len())));
    }
    if target >= logits.len() {
        return Err(Error::Range(format!("target {target} outside {} permutation classes", logits.len())));
    }
    let lt = logits[target];
    let loss = if logits.iter().all(|&v| v <= lt) {
        logits.iter().enumerate().filter(|&(k, _)| k != target).map(|(_, &v)| (v - lt).exp()).sum::<f64>().ln_1p()
    } else {
        log_sum_exp(logits) - lt
    };
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Batch mean of [`order_prediction_loss`].
pub fn order_prediction_batch(logits: &[Vec<f64>], targets: &[usize]) -> Result<LossGrad<Vec<f64>>> {
    if logits.is_empty() || logits.len() != targets.len() {
        return Err(Error::shape(format!("{} logit rows for {} targets", logits.len(), targets.len())));
    }
    let inv = 1.0 / logits.len() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &t) in logits.iter().zip(targets) {
        let (l, g) = order_prediction_loss(row, t)?;
        value += l * inv;
        grads.push(g.into_iter().map(|v| v * inv).collect());
    }
    Ok(LossGrad { value, grads })
}
