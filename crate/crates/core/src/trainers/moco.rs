use std::borrow::Cow;

use rayon::prelude::*;

use super::batch::{backward_query, forward_query, pretext_losses, sample_batch, zero_grads, BatchItem};
use super::optim::SgdConfig;
use super::simclr::{apply_update, at_step};
use super::{Framework, LossBreakdown, LossWeights, Pretext, StepMetrics, TrainState};
use crate::encoder::{DualRep, EncoderParams, Feature, Gradients};
use crate::error::{Error, Result};
use crate::losses::{clip_contrastive_moco, tc_contrast_moco, Hyperparams};
use crate::synthetic::{AugmentConfig, ClipSampling, Video};

/// Outcome of the queue-based objective. Key-side and queue gradients are
/// reported after the stop-gradient, so they are exactly zero.
#[derive(Debug, Clone)]
pub struct MocoGradients {
    pub losses: LossBreakdown,
    pub query: Gradients,
    pub key: Gradients,
    pub clip_queue: Vec<Vec<f64>>,
    pub dual_queue: Vec<Vec<Vec<f64>>>,
    /// Key features of the batch, to be enqueued.
    pub k_plus: Vec<Feature>,
    pub d_plus: Vec<DualRep>,
}

/// Stop-gradient: keeps the shape, drops the values.
pub fn detach(g: &[Vec<f64>]) -> Vec<Vec<f64>> {
    g.iter().map(|v| vec![0.0; v.len()]).collect()
}

/// Query clip `c1` goes through the query encoder; the augmented second
/// clip goes through the key encoder with no gradient.
#[allow(clippy::too_many_arguments)]
pub fn moco_gradients(
    query: &EncoderParams,
    key: &EncoderParams,
    clip_queue: &[Feature],
    dual_queue: &[DualRep],
    hyper: &Hyperparams,
    batch: &[BatchItem],
    pretext: Pretext,
    w: &LossWeights,
) -> Result<MocoGradients> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    if key.layout != query.layout {
        return Err(Error::shape("key and query parameter manifests differ"));
    }
    let passes = forward_query(query, batch, pretext, false)?;
    let keys = batch
        .par_iter()
        .map(|it| Ok((key.clip_forward(&it.second)?.head.feature, key.project_dual(&it.second)?)))
        .collect::<Result<Vec<_>>>()?;
    let (k_plus, d_plus): (Vec<Feature>, Vec<DualRep>) = keys.into_iter().unzip();

    let z: Vec<Feature> = passes.iter().map(|p| p.first_clip.head.feature.clone()).collect();
    let r: Vec<DualRep> = passes.iter().map(|p| p.first_dual.rep.clone()).collect();
    let lc = clip_contrastive_moco(&z, &k_plus, clip_queue, hyper.tau)?;
    let ltc = tc_contrast_moco(&r, &d_plus, dual_queue, hyper.tau_tc)?;

    let mut grads = zero_grads(query, batch.len());
    for (i, g) in grads.iter_mut().enumerate() {
        crate::linalg::axpy(w.contrast, &lc.d_query[i], &mut g.first_clip);
        super::batch::add_scaled(w.tc, &ltc.d_query[i], &mut g.first_dual);
    }
    let (l_rank_unaug, l_rank_aug, l_op) = pretext_losses(&passes, batch, pretext, hyper.theta, w, &mut grads)?;
    let l_total = w.contrast * lc.value
        + w.rank_unaug * l_rank_unaug
        + w.rank_aug * l_rank_aug
        + w.tc * ltc.value
        + w.order * l_op;

    // Keys and queue entries are detached: their raw gradients
    // (lc.d_positive, lc.d_queue, ltc.*) are discarded here.
    let clip_queue_grad = detach(&lc.d_queue);
    let dual_queue_grad = ltc.d_queue.iter().map(|g| detach(g)).collect();
    Ok(MocoGradients {
        losses: LossBreakdown { l_c: lc.value, l_rank_unaug, l_rank_aug, l_tc: ltc.value, l_op, l_total },
        query: backward_query(query, batch, &passes, &grads),
        key: Gradients::zeros_like(key),
        clip_queue: clip_queue_grad,
        dual_queue: dual_queue_grad,
        k_plus,
        d_plus,
    })
}

/// Weighted objective value for the given state and batch.
pub fn moco_loss(state: &TrainState, batch: &[BatchItem], pretext: Pretext) -> Result<f64> {
    let (key, cq, dq) = moco_parts(state)?;
    let w = LossWeights::from_hyper(&state.hyper, pretext);
    Ok(moco_gradients(&state.query, key, &cq, &dq, &state.hyper, batch, pretext, &w)?.losses.l_total)
}

type MocoParts<'a> = (&'a EncoderParams, Cow<'a, [Feature]>, Cow<'a, [DualRep]>);

fn moco_parts(state: &TrainState) -> Result<MocoParts<'_>> {
    match (&state.key, &state.clip_queue, &state.dual_queue) {
        (Some(k), Some(cq), Some(dq)) if state.framework == Framework::Moco => Ok((k, cq.contents(), dq.contents())),
        _ => Err(Error::config("MoCo step on a state without key encoder and queues")),
    }
}

/// One momentum-queue step, in order: loss and query gradient, momentum
/// update of the key encoder, SGD update of the query encoder, then
/// enqueue the batch keys and evict the oldest.
pub fn moco_step(
    state: &mut TrainState,
    videos: &[&Video],
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    pretext: Pretext,
    optim: &SgdConfig,
) -> Result<StepMetrics> {
    let cap = state.hyper.queue_size;
    if videos.len() > cap {
        return Err(Error::config(format!("queue capacity {cap} is smaller than the batch size {}", videos.len())));
    }
    moco_parts(state)?;
    let batch = sample_batch(videos, sampling, aug, pretext, &mut state.rng)?;
    if let (Some(cq), Some(dq)) = (state.clip_queue.as_mut(), state.dual_queue.as_mut()) {
        cq.make_contiguous();
        dq.make_contiguous();
    }
    let w = LossWeights::from_hyper(&state.hyper, pretext);
    let g = {
        let (key, cq, dq) = moco_parts(state)?;
        moco_gradients(&state.query, key, &cq, &dq, &state.hyper, &batch, pretext, &w).map_err(at_step(state))?
    };
    if !g.losses.is_finite() {
        return Err(Error::NonFinite { step: state.step, detail: format!("loss values {:?}", g.losses) });
    }
    let m = state.hyper.momentum;
    state.key.as_mut().expect("checked above").momentum_update(&state.query, m)?;
    let lr = optim.lr_at(state.epoch as usize);
    apply_update(state, &g.query, lr, optim)?;
    state.clip_queue.as_mut().expect("checked above").enqueue(&g.k_plus)?;
    state.dual_queue.as_mut().expect("checked above").enqueue(&g.d_plus)?;
    state.step += 1;
    Ok(StepMetrics { step: state.step, epoch: state.epoch, losses: g.losses, lr })
}
