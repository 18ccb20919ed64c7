//! Temporal-coherent contrast: InfoNCE where the similarity of two dual
//! representations is the mean of all pairwise part dot products. That mean
//! equals the dot product of the part means, so both forms reuse the plain
//! InfoNCE kernels on part means and spread the gradient back over parts.

use super::contrastive::{in_batch, with_queue};
use super::{LossGrad, QueueLossGrad};
use crate::encoder::DualRep;
use crate::error::{Error, Result};

/// `(1/S^2) sum_{x in a, y in b} x . y`.
pub fn tc_sim(a: &DualRep, b: &DualRep) -> Result<f64> {
    if a.segments() != b.segments() || a.dim() != b.dim() {
        return Err(Error::shape("tc-sim of dual representations with different shapes"));
    }
    let s = a.segments() as f64;
    let mut total = 0.0;
    for x in &a.parts {
        for y in &b.parts {
            total += x.dot(y);
        }
    }
    Ok(total / (s * s))
}

fn part_mean(r: &DualRep) -> Vec<f64> {
    let s = r.segments() as f64;
    let mut m = vec![0.0; r.dim()];
    for p in &r.parts {
        for (mi, v) in m.iter_mut().zip(p.as_slice()) {
            *mi += v / s;
        }
    }
    m
}

fn check_shapes(groups: &[&[DualRep]]) -> Result<()> {
    let mut all = groups.iter().flat_map(|g| g.iter());
    if let Some(first) = all.next() {
        let (s, d) = (first.segments(), first.dim());
        if all.any(|r| r.segments() != s || r.dim() != d) {
            return Err(Error::shape("dual representations differ in segment count or dimension"));
        }
    }
    Ok(())
}

fn views(xs: &[Vec<f64>]) -> Vec<&[f64]> {
    xs.iter().map(Vec::as_slice).collect()
}

fn spread(grad: Vec<f64>, segments: usize) -> Vec<Vec<f64>> {
    let g: Vec<f64> = grad.iter().map(|v| v / segments as f64).collect();
    vec![g; segments]
}

pub fn tc_contrast_simclr(reps: &[DualRep], pairing: &[usize], tau_tc: f64) -> Result<LossGrad<Vec<Vec<f64>>>> {
    check_shapes(&[reps])?;
    let means: Vec<Vec<f64>> = reps.iter().map(part_mean).collect();
    let l = in_batch(&views(&means), pairing, tau_tc)?;
    let s = reps[0].segments();
    Ok(LossGrad { value: l.value, grads: l.grads.into_iter().map(|g| spread(g, s)).collect() })
}

pub fn tc_contrast_moco(
    r: &[DualRep],
    d_plus: &[DualRep],
    dual_queue: &[DualRep],
    tau_tc: f64,
) -> Result<QueueLossGrad<Vec<Vec<f64>>>> {
    check_shapes(&[r, d_plus, dual_queue])?;
    let mean_all = |xs: &[DualRep]| xs.iter().map(part_mean).collect::<Vec<_>>();
    let (mq, mp, mk) = (mean_all(r), mean_all(d_plus), mean_all(dual_queue));
    let l = with_queue(&views(&mq), &views(&mp), &views(&mk), tau_tc)?;
    let s = r.first().map_or(1, DualRep::segments);
    let lift = |gs: Vec<Vec<f64>>| gs.into_iter().map(|g| spread(g, s)).collect();
    Ok(QueueLossGrad {
        value: l.value,
        d_query: lift(l.d_query),
        d_positive: lift(l.d_positive),
        d_queue: lift(l.d_queue),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Feature;

    fn e(i: usize) -> Feature {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        Feature::from_unit(v).unwrap()
    }

    #[test]
    fn tc_sim_cases() {
        let a = DualRep::new(vec![e(0), e(0)]).unwrap();
        assert_eq!(tc_sim(&a, &a).unwrap(), 1.0);
        let b = DualRep::new(vec![e(0), e(1)]).unwrap();
        assert_eq!(tc_sim(&b, &b).unwrap(), 0.5);
        assert_eq!(tc_sim(&a, &b).unwrap(), tc_sim(&b, &a).unwrap());
        let c = DualRep::new(vec![e(0), e(1), e(2)]).unwrap();
        assert!(tc_sim(&a, &c).is_err());
    }

    #[test]
    fn identical_pair_zero_loss() {
        let a = DualRep::new(vec![e(0), e(0)]).unwrap();
        let l = tc_contrast_simclr(&[a.clone(), a], &[1, 0], 0.5).unwrap();
        assert!(l.value.abs() < 1e-15);
    }

    #[test]
    fn moco_form_matches_closed_value() {
        // tc-sim(r, d+) = 1, queue entry orthogonal: -log(e / (e + 1)) at tau = 1.
        let r = DualRep::new(vec![e(0), e(0)]).unwrap();
        let q = DualRep::new(vec![e(1), e(2)]).unwrap();
        let l = tc_contrast_moco(std::slice::from_ref(&r), std::slice::from_ref(&r), &[q], 1.0).unwrap();
        let en = std::f64::consts::E;
        assert!((l.value + (en / (en + 1.0)).ln()).abs() < 1e-15);
    }
}
