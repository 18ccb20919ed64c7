use rand::Rng;
use rayon::prelude::*;

use super::{LossWeights, Pretext};
use crate::encoder::{ClipTrace, DualRep, DualTrace, EncoderParams, Gradients, OrderTrace};
use crate::error::{Error, Result};
use crate::losses::{order_prediction_batch, rank_loss_aug, rank_loss_unaug};
use crate::synthetic::{
    augment, augment_with, concat_subclips, factorial, make_training_tuple, sample_clip, split_subclips, AugmentConfig,
    AugmentParams, Clip, ClipSampling, Permutation, Video,
};

/// Inputs drawn for one video of a batch.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub video_id: usize,
    /// `c1`, the raw first clip: clip feature, dual feature and ranking anchor.
    pub first: Clip,
    /// `augment(c2)`, the positive view.
    pub second: Clip,
    /// `c_hat = augment(c1)`.
    pub augmented: Clip,
    /// `s_hat`, the sub-clips of `c_hat` in shuffled order.
    pub shuffled: Clip,
    pub permutation: Permutation,
}

fn order_prediction_tuple<R: Rng + ?Sized>(
    video: &Video,
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<(Clip, Clip, Clip, Permutation)> {
    let clip = sample_clip(video, sampling.length, sampling.stride, rng)?;
    let params = AugmentParams::draw(aug, clip.frame_dim(), rng)?;
    let augmented = augment_with(&clip, &params)?;
    let s = sampling.segments;
    let classes = factorial(s);
    let perm = Permutation::from_index(s, rng.random_range(0..classes));
    let parts = split_subclips(&augmented, s)?;
    let mut shuffled = concat_subclips(&perm.apply(&parts))?;
    shuffled.start_frame = augmented.start_frame;
    Ok((clip, augmented, shuffled, perm))
}

/// Draws, per video and in order: the first clip with its augmentation and
/// shuffle, then the second clip and its augmentation. Under the
/// order-prediction pretext the sub-clip order is uniform over all `S!`
/// orders, identity included.
pub fn sample_batch<R: Rng + ?Sized>(
    videos: &[&Video],
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    pretext: Pretext,
    rng: &mut R,
) -> Result<Vec<BatchItem>> {
    videos
        .iter()
        .map(|v| {
            let (first, augmented, shuffled, permutation) = match pretext {
                Pretext::ShuffleRank => {
                    let t = make_training_tuple(v, sampling, aug, rng)?;
                    (t.clip, t.augmented, t.shuffled, t.permutation)
                }
                Pretext::OrderPrediction => order_prediction_tuple(v, sampling, aug, rng)?,
            };
            let raw_second = sample_clip(v, sampling.length, sampling.stride, rng)?;
            let second = augment(&raw_second, aug, rng)?;
            Ok(BatchItem { video_id: v.id, first, second, augmented, shuffled, permutation })
        })
        .collect()
}

/// Query-encoder activations for one batch item.
pub(crate) struct QueryPass {
    pub first_clip: ClipTrace,
    pub first_dual: DualTrace,
    /// Second view through the same encoder (in-batch form only).
    pub second: Option<(ClipTrace, DualTrace)>,
    pub aug_dual: DualTrace,
    pub shuf_dual: DualTrace,
    /// `shuf_dual` with its parts moved back to temporal order.
    pub shuf_canonical: DualRep,
    pub order: Option<OrderTrace>,
}

/// Loss gradients with respect to the features of a [`QueryPass`].
pub(crate) struct QueryGrads {
    pub first_clip: Vec<f64>,
    pub first_dual: Vec<Vec<f64>>,
    pub second_clip: Vec<f64>,
    pub second_dual: Vec<Vec<f64>>,
    pub aug_dual: Vec<Vec<f64>>,
    pub shuf_canonical: Vec<Vec<f64>>,
    pub order_logits: Vec<f64>,
}

impl QueryGrads {
    fn zeros(params: &EncoderParams) -> Self {
        let a = &params.arch;
        let part = || vec![vec![0.0; a.proj_dim]; a.segments];
        Self {
            first_clip: vec![0.0; a.proj_dim],
            first_dual: part(),
            second_clip: vec![0.0; a.proj_dim],
            second_dual: part(),
            aug_dual: part(),
            shuf_canonical: part(),
            order_logits: vec![0.0; a.order_classes],
        }
    }
}

pub(crate) fn add_scaled(w: f64, src: &[Vec<f64>], dst: &mut [Vec<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        crate::linalg::axpy(w, s, d);
    }
}

pub(crate) fn forward_query(
    params: &EncoderParams,
    items: &[BatchItem],
    pretext: Pretext,
    with_second: bool,
) -> Result<Vec<QueryPass>> {
    if pretext == Pretext::OrderPrediction && params.arch.order_classes == 0 {
        return Err(Error::config("order-prediction pretext needs an encoder with an order head"));
    }
    items
        .par_iter()
        .map(|it| {
            let first_clip = params.clip_forward(&it.first)?;
            let first_dual = params.dual_forward(&it.first)?;
            let second = if with_second {
                Some((params.clip_forward(&it.second)?, params.dual_forward(&it.second)?))
            } else {
                None
            };
            let aug_dual = params.dual_forward(&it.augmented)?;
            let shuf_dual = params.dual_forward(&it.shuffled)?;
            let shuf_canonical = shuf_dual.rep.unpermute(&it.permutation.0)?;
            let order = match pretext {
                Pretext::OrderPrediction => Some(params.order_forward(&shuf_dual.rep)?),
                Pretext::ShuffleRank => None,
            };
            Ok(QueryPass { first_clip, first_dual, second, aug_dual, shuf_dual, shuf_canonical, order })
        })
        .collect()
}

pub(crate) fn zero_grads(params: &EncoderParams, n: usize) -> Vec<QueryGrads> {
    (0..n).map(|_| QueryGrads::zeros(params)).collect()
}

/// Ranking or order-prediction losses on the query side. Returns
/// `(L_rank_unaug, L_rank_aug, L_op)` and accumulates weighted gradients.
pub(crate) fn pretext_losses(
    passes: &[QueryPass],
    items: &[BatchItem],
    pretext: Pretext,
    theta: f64,
    w: &LossWeights,
    grads: &mut [QueryGrads],
) -> Result<(f64, f64, f64)> {
    match pretext {
        Pretext::ShuffleRank => {
            let unaug: Vec<(DualRep, DualRep)> =
                passes.iter().map(|p| (p.first_dual.rep.clone(), p.shuf_canonical.clone())).collect();
            let aug: Vec<(DualRep, DualRep)> =
                passes.iter().map(|p| (p.aug_dual.rep.clone(), p.shuf_canonical.clone())).collect();
            let lu = rank_loss_unaug(&unaug, theta)?;
            let la = rank_loss_aug(&aug, theta)?;
            for ((g, gu), ga) in grads.iter_mut().zip(&lu.grads).zip(&la.grads) {
                add_scaled(w.rank_unaug, &gu.first, &mut g.first_dual);
                add_scaled(w.rank_unaug, &gu.second, &mut g.shuf_canonical);
                add_scaled(w.rank_aug, &ga.first, &mut g.aug_dual);
                add_scaled(w.rank_aug, &ga.second, &mut g.shuf_canonical);
            }
            Ok((lu.value, la.value, 0.0))
        }
        Pretext::OrderPrediction => {
            let logits: Vec<Vec<f64>> =
                passes.iter().map(|p| p.order.as_ref().map(|o| o.logits.clone()).unwrap_or_default()).collect();
            let targets: Vec<usize> = items.iter().map(|it| it.permutation.index()).collect();
            let lo = order_prediction_batch(&logits, &targets)?;
            for (g, d) in grads.iter_mut().zip(&lo.grads) {
                crate::linalg::axpy(w.order, d, &mut g.order_logits);
            }
            Ok((0.0, 0.0, lo.value))
        }
    }
}

/// Per-sample parameter gradients, reduced in batch order.
pub(crate) fn backward_query(
    params: &EncoderParams,
    items: &[BatchItem],
    passes: &[QueryPass],
    grads: &[QueryGrads],
) -> Gradients {
    let per_sample: Vec<Gradients> = passes
        .par_iter()
        .zip(grads.par_iter())
        .zip(items.par_iter())
        .map(|((p, g), it)| {
            let mut acc = Gradients::zeros_like(params);
            params.clip_backward(&p.first_clip, &g.first_clip, &mut acc);
            if let Some((clip, _)) = &p.second {
                params.clip_backward(clip, &g.second_clip, &mut acc);
            }
            params.dual_backward(&p.first_dual, &g.first_dual, &mut acc);
            if let Some((_, dual)) = &p.second {
                params.dual_backward(dual, &g.second_dual, &mut acc);
            }
            params.dual_backward(&p.aug_dual, &g.aug_dual, &mut acc);
            // Shuffled part j sits at temporal slot order[j].
            let mut d_shuf: Vec<Vec<f64>> = it.permutation.0.iter().map(|&k| g.shuf_canonical[k].clone()).collect();
            if let Some(o) = &p.order {
                let d_parts = params.order_backward(o, &g.order_logits, &mut acc);
                add_scaled(1.0, &d_parts, &mut d_shuf);
            }
            params.dual_backward(&p.shuf_dual, &d_shuf, &mut acc);
            acc
        })
        .collect();
    reduce(params, &per_sample)
}

pub(crate) fn reduce(params: &EncoderParams, per_sample: &[Gradients]) -> Gradients {
    let mut total = Gradients::zeros_like(params);
    for g in per_sample {
        total.add_assign(g);
    }
    total
}

/// `[z1_0, z2_0, z1_1, z2_1, ...]` pairs item `2i` with `2i + 1`.
pub(crate) fn interleaved_pairing(n: usize) -> Vec<usize> {
    (0..2 * n).map(|i| i ^ 1).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::synthetic::{generate_dataset, unshuffle_subclips, VideoSpec};

    #[test]
    fn batch_is_deterministic_and_consistent() {
        let ds = generate_dataset(&VideoSpec { videos_per_class: 2, ..VideoSpec::default() }).unwrap();
        let vids: Vec<&Video> = ds.videos.iter().take(3).collect();
        let s = ClipSampling::default();
        let a = AugmentConfig::default();
        let b1 = sample_batch(&vids, &s, &a, Pretext::ShuffleRank, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b2 = sample_batch(&vids, &s, &a, Pretext::ShuffleRank, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        for (x, y) in b1.iter().zip(&b2) {
            assert_eq!(x.first, y.first);
            assert_eq!(x.second, y.second);
            assert_eq!(x.shuffled, y.shuffled);
            assert_eq!(unshuffle_subclips(&x.shuffled, &x.permutation).unwrap(), x.augmented);
            assert_eq!(x.video_id, x.second.video_id);
        }
    }

    #[test]
    fn order_prediction_covers_identity() {
        let ds = generate_dataset(&VideoSpec { videos_per_class: 2, ..VideoSpec::default() }).unwrap();
        let vids: Vec<&Video> = ds.videos.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = sample_batch(
            &vids,
            &ClipSampling::default(),
            &AugmentConfig::default(),
            Pretext::OrderPrediction,
            &mut rng,
        )
        .unwrap();
        assert!(b.iter().any(|it| it.permutation.is_identity()));
        assert!(b.iter().any(|it| !it.permutation.is_identity()));
    }

    #[test]
    fn pairing_is_interleaved() {
        assert_eq!(interleaved_pairing(2), vec![1, 0, 3, 2]);
    }
}
