//! Alignment/uniformity split of the in-batch clip contrastive loss.
//!
//! `L_c = -(1/M) sum_i s(i,i+)/tau
//!        + (1/M) sum_i log( exp(s(i,i+)/tau) + sum_{k not in {i, i+}} exp(s(i,k)/tau) )`
//!
//! This is an identity only because the in-batch denominator runs over every
//! `k != i`, which is exactly the positive plus all non-pair items.

use super::contrastive::clip_contrastive_simclr;
use crate::encoder::Feature;
use crate::error::Result;
use crate::linalg::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    /// `L_c` evaluated directly.
    pub lhs: f64,
    /// Alignment term plus uniformity term.
    pub rhs: f64,
    pub residual: f64,
}

pub fn decomposition_check(features: &[Feature], pairing: &[usize], tau: f64) -> Result<Decomposition> {
    let lhs = clip_contrastive_simclr(features, pairing, tau)?.value;
    let m = features.len() as f64;
    let mut align = 0.0;
    let mut uniform = 0.0;
    for (i, zi) in features.iter().enumerate() {
        let pos = pairing[i];
        let s_pos = zi.dot(&features[pos]) / tau;
        align -= s_pos / m;
        let mut terms = vec![s_pos];
        terms.extend(features.iter().enumerate().filter(|&(k, _)| k != i && k != pos).map(|(_, zk)| zi.dot(zk) / tau));
        uniform += log_sum_exp(&terms) / m;
    }
    let rhs = align + uniform;
    Ok(Decomposition { lhs, rhs, residual: (lhs - rhs).abs() })
}
