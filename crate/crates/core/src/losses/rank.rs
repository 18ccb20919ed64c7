//! Shuffle-rank: logistic pairwise ranking over the sub-clip features of a
//! clip and its shuffled counterpart.
//!
//! For segment `k`, an anchor's positive is the same-segment part of the
//! other clip and its negatives are every part of a different segment from
//! either clip. With two segments this gives, e.g., `q1+ = {p1}`,
//! `q1- = {q2, p2}`.

use super::{LossGrad, PairGrad};
use crate::encoder::DualRep;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, sigmoid, softplus};

/// `ln(1 + exp((sim_neg - sim_pos) / theta))`.
pub fn rank_term(sim_neg: f64, sim_pos: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::config(format!("ranking temperature must be positive, got {theta}")));
    }
    Ok(softplus((sim_neg - sim_pos) / theta))
}

/// `d rank_term / d t` at `t = sim_neg - sim_pos`.
pub fn rank_term_slope(t: f64, theta: f64) -> f64 {
    sigmoid(t / theta) / theta
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingAnchor {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// Anchor sets over the `2S` parts of a pair, indexed `0..S` for the first
/// representation and `S..2S` for the second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingSets {
    pub segments: usize,
    pub anchors: Vec<RankingAnchor>,
}

impl RankingSets {
    pub fn for_segments(segments: usize) -> Self {
        let s = segments;
        let anchors = (0..2 * s)
            .map(|x| {
                let (side, k) = (x / s, x % s);
                let partner = (1 - side) * s + k;
                let negatives = (0..2 * s).filter(|&y| y % s != k).collect();
                RankingAnchor { anchor: x, positives: vec![partner], negatives }
            })
            .collect();
        Self { segments, anchors }
    }

    pub fn term_count(&self) -> usize {
        self.anchors.iter().map(|a| a.positives.len() * a.negatives.len()).sum()
    }
}

pub fn build_ranking_sets(first: &DualRep, second: &DualRep) -> Result<RankingSets> {
    if first.segments() != second.segments() {
        return Err(Error::shape(format!("ranking pair has {} and {} segments", first.segments(), second.segments())));
    }
    Ok(RankingSets::for_segments(first.segments()))
}

fn rank_sum(pairs: &[(DualRep, DualRep)], theta: f64) -> Result<LossGrad<PairGrad>> {
    if pairs.is_empty() {
        return Err(Error::config("ranking loss on an empty batch"));
    }
    if !(theta > 0.0) {
        return Err(Error::config(format!("ranking temperature must be positive, got {theta}")));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pairs.len());
    for (first, second) in pairs {
        let sets = build_ranking_sets(first, second)?;
        let s = sets.segments;
        let parts: Vec<&[f64]> = first.parts.iter().chain(&second.parts).map(|f| f.as_slice()).collect();
        let dim = parts[0].len();
        let mut d = vec![vec![0.0; dim]; 2 * s];
        for a in &sets.anchors {
            let x = parts[a.anchor];
            for &yi in &a.positives {
                let sim_pos = dot(x, parts[yi]);
                for &zi in &a.negatives {
                    let t = dot(x, parts[zi]) - sim_pos;
                    total += softplus(t / theta);
                    // dt/dx = z - y, dt/dz = x, dt/dy = -x
                    let g = rank_term_slope(t, theta);
                    axpy(g, parts[zi], &mut d[a.anchor]);
                    axpy(-g, parts[yi], &mut d[a.anchor]);
                    axpy(g, x, &mut d[zi]);
                    axpy(-g, x, &mut d[yi]);
                }
            }
        }
        let second_grads = d.split_off(s);
        grads.push(PairGrad { first: d, second: second_grads });
    }
    Ok(LossGrad { value: total, grads })
}

/// Ranking loss between raw clips and their shuffled augmentations, summed
/// over the batch. The second representation of each pair must already be
/// in canonical segment order.
pub fn rank_loss_unaug(pairs: &[(DualRep, DualRep)], theta: f64) -> Result<LossGrad<PairGrad>> {
    rank_sum(pairs, theta)
}

/// Ranking loss between augmented clips and their shuffled versions.
pub fn rank_loss_aug(pairs: &[(DualRep, DualRep)], theta: f64) -> Result<LossGrad<PairGrad>> {
    rank_sum(pairs, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Feature;

    fn e(i: usize, d: usize) -> Feature {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Feature::from_unit(v).unwrap()
    }

    #[test]
    fn rank_term_values() {
        for theta in [0.001, 0.05, 1.0, 7.0] {
            assert!((rank_term(0.3, 0.3, theta).unwrap() - 2f64.ln()).abs() < 1e-12);
        }
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((rank_term(0.0, 1.0, 0.5).unwrap() - expect).abs() < 1e-15);
        assert!((expect - 0.126928).abs() < 1e-6);
        let big = rank_term(700.0, 0.0, 1.0).unwrap();
        assert!(big.is_finite() && (big - 700.0).abs() < 1e-9);
        assert!(rank_term(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn slope_at_zero() {
        for theta in [0.01, 0.05, 1.0] {
            assert!((rank_term_slope(0.0, theta) - 0.5 / theta).abs() < 1e-12);
        }
    }

    #[test]
    fn two_segment_sets_match_listing() {
        let sets = RankingSets::for_segments(2);
        // indices: q1=0, q2=1, p1=2, p2=3
        assert_eq!(sets.anchors[0], RankingAnchor { anchor: 0, positives: vec![2], negatives: vec![1, 3] });
        assert_eq!(sets.anchors[1], RankingAnchor { anchor: 1, positives: vec![3], negatives: vec![0, 2] });
        assert_eq!(sets.anchors[2], RankingAnchor { anchor: 2, positives: vec![0], negatives: vec![1, 3] });
        assert_eq!(sets.anchors[3], RankingAnchor { anchor: 3, positives: vec![1], negatives: vec![0, 2] });
        assert_eq!(sets.term_count(), 8);
        for a in &sets.anchors {
            assert!(!a.positives.contains(&a.anchor) && !a.negatives.contains(&a.anchor));
            assert!(a.positives.iter().all(|p| !a.negatives.contains(p)));
        }
    }

    #[test]
    fn four_segment_sets() {
        let sets = RankingSets::for_segments(4);
        assert!(sets.anchors.iter().all(|a| a.positives.len() == 1 && a.negatives.len() == 6));
    }

    #[test]
    fn aligned_and_collapsed_pairs() {
        let r = DualRep::new(vec![e(0, 4), e(1, 4)]).unwrap();
        let l = rank_loss_unaug(&[(r.clone(), r.clone())], 0.05).unwrap();
        let expect = 8.0 * (-20.0f64).exp().ln_1p();
        assert!((l.value - expect).abs() < 1e-12 * expect, "{} vs {}", l.value, expect);
        assert!(l.value > 1.5e-8 && l.value < 1.7e-8);

        let same = DualRep::new(vec![e(2, 4), e(2, 4)]).unwrap();
        let l = rank_loss_aug(&[(same.clone(), same)], 0.05).unwrap();
        assert!((l.value - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let r2 = DualRep::new(vec![e(0, 3), e(1, 3)]).unwrap();
        let r3 = DualRep::new(vec![e(0, 3), e(1, 3), e(2, 3)]).unwrap();
        assert!(matches!(build_ranking_sets(&r2, &r3), Err(Error::Shape(_))));
        assert!(rank_loss_unaug(&[], 0.05).is_err());
    }
}
