//! InfoNCE in its in-batch (SimCLR) and dictionary (MoCo) forms, written once
//! over plain embedding slices so the clip and temporal-coherent losses share
//! them.

use super::{LossGrad, QueueLossGrad};
use crate::encoder::Feature;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, log_sum_exp};

/// `pairing[i]` is the positive of item `i`; must be a fixed-point-free involution.
pub fn validate_pairing(pairing: &[usize], n: usize) -> Result<()> {
    if pairing.len() != n {
        return Err(Error::shape(format!("pairing of length {} for {n} items", pairing.len())));
    }
    for (i, &j) in pairing.iter().enumerate() {
        if j >= n || j == i || pairing[j] != i {
            return Err(Error::config(format!("pairing is not an involution at item {i} -> {j}")));
        }
    }
    Ok(())
}

/// `-(1/M) sum_i log[ exp(s(i,i+)/tau) / sum_{k != i} exp(s(i,k)/tau) ]` with
/// `s = dot`; the positive stays in the denominator.
pub(crate) fn in_batch(emb: &[&[f64]], pairing: &[usize], tau: f64) -> Result<LossGrad<Vec<f64>>> {
    let m = emb.len();
    if m < 2 {
        return Err(Error::config("contrastive loss needs at least 2 items"));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    validate_pairing(pairing, m)?;
    let dim = emb[0].len();
    let mut grads = vec![vec![0.0; dim]; m];
    let mut total = 0.0;
    let inv_m = 1.0 / m as f64;
    for i in 0..m {
        let logits: Vec<f64> =
            (0..m).map(|k| if k == i { f64::NEG_INFINITY } else { dot(emb[i], emb[k]) / tau }).collect();
        let lse = log_sum_exp(&logits);
        let pos = pairing[i];
        total += lse - logits[pos];
        // dL/ds_ik = (softmax_ik - [k == i+]) / (tau M)
        for k in 0..m {
            if k == i {
                continue;
            }
            let w = (logits[k] - lse).exp() - if k == pos { 1.0 } else { 0.0 };
            let c = w * inv_m / tau;
            axpy(c, emb[k], &mut grads[i]);
            axpy(c, emb[i], &mut grads[k]);
        }
    }
    Ok(LossGrad { value: total * inv_m, grads })
}

/// `-(1/N) sum_i log[ exp(q_i.k_i/tau) / (exp(q_i.k_i/tau) + sum_j exp(q_i.d_j/tau)) ]`.
pub(crate) fn with_queue(
    queries: &[&[f64]],
    positives: &[&[f64]],
    queue: &[&[f64]],
    tau: f64,
) -> Result<QueueLossGrad<Vec<f64>>> {
    let n = queries.len();
    if n == 0 {
        return Err(Error::config("queue contrastive loss needs at least one query"));
    }
    if positives.len() != n {
        return Err(Error::shape(format!("{} positives for {n} queries", positives.len())));
    }
    if queue.is_empty() {
        return Err(Error::config("negative queue is empty"));
    }
    if !(tau > 0.0) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    let dim = queries[0].len();
    let inv_n = 1.0 / n as f64;
    let mut d_query = vec![vec![0.0; dim]; n];
    let mut d_positive = vec![vec![0.0; dim]; n];
    let mut d_queue = vec![vec![0.0; dim]; queue.len()];
    let mut total = 0.0;
    let mut logits = Vec::with_capacity(queue.len() + 1);
    for i in 0..n {
        logits.clear();
        logits.push(dot(queries[i], positives[i]) / tau);
        logits.extend(queue.iter().map(|k| dot(queries[i], k) / tau));
        let lse = log_sum_exp(&logits);
        total += lse - logits[0];
        let c_pos = ((logits[0] - lse).exp() - 1.0) * inv_n / tau;
        axpy(c_pos, positives[i], &mut d_query[i]);
        axpy(c_pos, queries[i], &mut d_positive[i]);
        for (j, k) in queue.iter().enumerate() {
            let c = (logits[j + 1] - lse).exp() * inv_n / tau;
            axpy(c, k, &mut d_query[i]);
            axpy(c, queries[i], &mut d_queue[j]);
        }
    }
    Ok(QueueLossGrad { value: total * inv_n, d_query, d_positive, d_queue })
}

fn slices(f: &[Feature]) -> Vec<&[f64]> {
    f.iter().map(Feature::as_slice).collect()
}

fn check_dims(groups: &[&[Feature]]) -> Result<()> {
    let d = groups.iter().flat_map(|g| g.iter()).map(Feature::dim).next();
    if let Some(d) = d {
        if groups.iter().flat_map(|g| g.iter()).any(|f| f.dim() != d) {
            return Err(Error::shape("features differ in dimension"));
        }
    }
    Ok(())
}

/// In-batch clip contrastive loss over `2N` unit features.
pub fn clip_contrastive_simclr(features: &[Feature], pairing: &[usize], tau: f64) -> Result<LossGrad<Vec<f64>>> {
    check_dims(&[features])?;
    in_batch(&slices(features), pairing, tau)
}

/// Clip contrastive loss against a detached negative dictionary.
pub fn clip_contrastive_moco(
    z: &[Feature],
    k_plus: &[Feature],
    queue: &[Feature],
    tau: f64,
) -> Result<QueueLossGrad<Vec<f64>>> {
    check_dims(&[z, k_plus, queue])?;
    with_queue(&slices(z), &slices(k_plus), &slices(queue), tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Feature {
        Feature::normalized(v).unwrap()
    }

    #[test]
    fn identical_pair_gives_zero() {
        let z = vec![unit(&[1.0, 2.0]), unit(&[1.0, 2.0])];
        let l = clip_contrastive_simclr(&z, &[1, 0], 0.07).unwrap();
        assert!(l.value.abs() < 1e-15);
    }

    #[test]
    fn non_negative_on_random_input() {
        let z: Vec<Feature> = (0..6).map(|i| unit(&[(i as f64).sin(), (i as f64 * 1.7).cos(), 0.3])).collect();
        let l = clip_contrastive_simclr(&z, &[1, 0, 3, 2, 5, 4], 0.5).unwrap();
        assert!(l.value >= 0.0);
    }

    #[test]
    fn bad_pairing_rejected() {
        let z: Vec<Feature> = (0..4).map(|i| unit(&[1.0, i as f64])).collect();
        assert!(clip_contrastive_simclr(&z, &[1, 2, 3, 0], 0.1).is_err());
        assert!(clip_contrastive_simclr(&z, &[0, 1, 2, 3], 0.1).is_err());
        assert!(clip_contrastive_simclr(&z, &[1, 0], 0.1).is_err());
    }

    #[test]
    fn moco_single_orthogonal_negative() {
        let z = vec![unit(&[1.0, 0.0])];
        let k = vec![unit(&[1.0, 0.0])];
        let q = vec![unit(&[0.0, 1.0])];
        let l = clip_contrastive_moco(&z, &k, &q, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((l.value - (-(e / (e + 1.0)).ln())).abs() < 1e-15);
        assert!((l.value - 0.3133).abs() < 1e-4);
        assert!(matches!(clip_contrastive_moco(&z, &k, &[], 1.0), Err(Error::Config(_))));
    }
}
