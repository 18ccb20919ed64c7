use rayon::prelude::*;

use super::batch::{
    add_scaled, backward_query, forward_query, interleaved_pairing, pretext_losses, reduce, sample_batch, zero_grads,
    BatchItem,
};
use super::optim::{sgd_step, SgdConfig};
use super::{Framework, LossBreakdown, LossWeights, Pretext, StepMetrics, TrainState};
use crate::encoder::{DualRep, EncoderParams, Feature, Gradients};
use crate::error::{Error, Result};
use crate::losses::{clip_contrastive_simclr, tc_contrast_simclr, Hyperparams};
use crate::synthetic::{AugmentConfig, ClipSampling, Video};

/// Loss values and parameter gradient of the in-batch objective.
///
/// Clip features are ordered `[z(c1_0), z(c2_0), z(c1_1), ...]` with
/// `2i <-> 2i+1` as positives; the temporal-coherent loss uses the dual
/// features of the same `2N` clips with the same pairing.
pub fn simclr_gradients(
    params: &EncoderParams,
    hyper: &Hyperparams,
    batch: &[BatchItem],
    pretext: Pretext,
    w: &LossWeights,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.len() < 2 {
        return Err(Error::config(format!("in-batch training needs at least 2 videos, got {}", batch.len())));
    }
    let passes = forward_query(params, batch, pretext, true)?;
    let mut grads = zero_grads(params, batch.len());
    let pairing = interleaved_pairing(batch.len());

    let mut z: Vec<Feature> = Vec::with_capacity(2 * batch.len());
    let mut r: Vec<DualRep> = Vec::with_capacity(2 * batch.len());
    for p in &passes {
        let (c2, d2) = p.second.as_ref().expect("in-batch pass keeps the second view");
        z.push(p.first_clip.head.feature.clone());
        z.push(c2.head.feature.clone());
        r.push(p.first_dual.rep.clone());
        r.push(d2.rep.clone());
    }
    let lc = clip_contrastive_simclr(&z, &pairing, hyper.tau)?;
    let ltc = tc_contrast_simclr(&r, &pairing, hyper.tau_tc)?;
    for (i, g) in grads.iter_mut().enumerate() {
        crate::linalg::axpy(w.contrast, &lc.grads[2 * i], &mut g.first_clip);
        crate::linalg::axpy(w.contrast, &lc.grads[2 * i + 1], &mut g.second_clip);
        add_scaled(w.tc, &ltc.grads[2 * i], &mut g.first_dual);
        add_scaled(w.tc, &ltc.grads[2 * i + 1], &mut g.second_dual);
    }
    let (l_rank_unaug, l_rank_aug, l_op) = pretext_losses(&passes, batch, pretext, hyper.theta, w, &mut grads)?;
    let l_total = w.contrast * lc.value
        + w.rank_unaug * l_rank_unaug
        + w.rank_aug * l_rank_aug
        + w.tc * ltc.value
        + w.order * l_op;
    let losses = LossBreakdown { l_c: lc.value, l_rank_unaug, l_rank_aug, l_tc: ltc.value, l_op, l_total };
    Ok((losses, backward_query(params, batch, &passes, &grads)))
}

/// Plain in-batch clip contrast with nothing else computed: the reference
/// the full objective must reduce to when both pretext weights are zero.
pub fn contrast_only_gradients(params: &EncoderParams, tau: f64, batch: &[BatchItem]) -> Result<(f64, Gradients)> {
    if batch.len() < 2 {
        return Err(Error::config(format!("in-batch training needs at least 2 videos, got {}", batch.len())));
    }
    let traces = batch
        .par_iter()
        .map(|it| Ok((params.clip_forward(&it.first)?, params.clip_forward(&it.second)?)))
        .collect::<Result<Vec<_>>>()?;
    let z: Vec<Feature> = traces.iter().flat_map(|(a, b)| [a.head.feature.clone(), b.head.feature.clone()]).collect();
    let lc = clip_contrastive_simclr(&z, &interleaved_pairing(batch.len()), tau)?;
    let per_sample: Vec<Gradients> = traces
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let mut acc = Gradients::zeros_like(params);
            params.clip_backward(a, &lc.grads[2 * i], &mut acc);
            params.clip_backward(b, &lc.grads[2 * i + 1], &mut acc);
            acc
        })
        .collect();
    Ok((lc.value, reduce(params, &per_sample)))
}

/// Attaches the step number to a non-finite value met while computing it.
pub(crate) fn at_step(state: &TrainState) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::NotFinite(detail) => Error::NonFinite { step: state.step, detail },
        other => other,
    }
}

fn check_finite(state: &TrainState, losses: &LossBreakdown) -> Result<()> {
    if !losses.is_finite() {
        return Err(Error::NonFinite { step: state.step, detail: format!("loss values {losses:?}") });
    }
    Ok(())
}

pub(crate) fn apply_update(state: &mut TrainState, grads: &Gradients, lr: f64, optim: &SgdConfig) -> Result<()> {
    if !grads.values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { step: state.step, detail: "non-finite gradient".into() });
    }
    sgd_step(&mut state.query, &mut state.velocity, grads, lr, optim)?;
    if !state.query.is_finite() {
        return Err(Error::NonFinite { step: state.step, detail: "non-finite parameters after update".into() });
    }
    Ok(())
}

/// One in-batch training step: sample from `state.rng`, compute the full
/// objective, take one SGD step.
pub fn simclr_step(
    state: &mut TrainState,
    videos: &[&Video],
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    pretext: Pretext,
    optim: &SgdConfig,
) -> Result<StepMetrics> {
    if state.framework != Framework::Simclr {
        return Err(Error::config("simclr_step on a MoCo training state"));
    }
    let batch = sample_batch(videos, sampling, aug, pretext, &mut state.rng)?;
    let w = LossWeights::from_hyper(&state.hyper, pretext);
    let (losses, grads) = simclr_gradients(&state.query, &state.hyper, &batch, pretext, &w).map_err(at_step(state))?;
    check_finite(state, &losses)?;
    let lr = optim.lr_at(state.epoch as usize);
    apply_update(state, &grads, lr, optim)?;
    state.step += 1;
    Ok(StepMetrics { step: state.step, epoch: state.epoch, losses, lr })
}

/// Reference step: same sampling (hence the same rng draws) as
/// [`simclr_step`], but only the clip contrastive loss.
pub fn contrast_only_step(
    state: &mut TrainState,
    videos: &[&Video],
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    pretext: Pretext,
    optim: &SgdConfig,
) -> Result<StepMetrics> {
    let batch = sample_batch(videos, sampling, aug, pretext, &mut state.rng)?;
    let (l_c, grads) = contrast_only_gradients(&state.query, state.hyper.tau, &batch).map_err(at_step(state))?;
    let losses = LossBreakdown { l_c, l_total: l_c, ..LossBreakdown::default() };
    check_finite(state, &losses)?;
    let lr = optim.lr_at(state.epoch as usize);
    apply_update(state, &grads, lr, optim)?;
    state.step += 1;
    Ok(StepMetrics { step: state.step, epoch: state.epoch, losses, lr })
}
