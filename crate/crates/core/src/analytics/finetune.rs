use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::EVAL_CLIPS;
use crate::encoder::{EncoderParams, Gradients};
use crate::error::{Error, Result};
use crate::linalg::{add_outer, affine, axpy, matvec_t, softmax};
use crate::synthetic::{augment, clip_at, sample_clip, uniform_clip_starts, AugmentConfig, ClipSampling, Dataset};
use crate::trainers::{sgd_step, SgdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: SgdConfig,
    /// Augment training clips with the pretraining augmentation.
    pub augment: bool,
    pub eval_clips: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            optim: SgdConfig { lr: 0.05, ..SgdConfig::default() },
            augment: true,
            eval_clips: EVAL_CLIPS,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.batch_size == 0 || self.eval_clips == 0 {
            return Err(Error::config("finetune batch_size and eval_clips must be positive"));
        }
        Ok(())
    }
}

/// Linear classifier on backbone features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub classes: usize,
    pub dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn init(classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (dim as f64).sqrt();
        let weight = (0..classes * dim).map(|_| rng.random_range(-a..a)).collect();
        let bias = (0..classes).map(|_| rng.random_range(-a..a)).collect();
        Self { classes, dim, weight, bias }
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        affine(&self.weight, &self.bias, self.classes, self.dim, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub predictions: Vec<usize>,
}

fn check_labels(dataset: &Dataset, ids: &[usize]) -> Result<()> {
    let k = dataset.spec.num_classes;
    for &i in ids {
        let v = dataset.videos.get(i).ok_or_else(|| Error::Range(format!("video {i} not in dataset")))?;
        if v.class_label >= k {
            return Err(Error::config(format!("label {} of video {i} exceeds {k} classes", v.class_label)));
        }
    }
    Ok(())
}

/// Averages class probabilities over `clips` uniformly placed clips per video.
pub fn evaluate_classifier(
    params: &EncoderParams,
    head: &LinearHead,
    dataset: &Dataset,
    ids: &[usize],
    sampling: &ClipSampling,
    clips: usize,
) -> Result<ClassificationReport> {
    check_labels(dataset, ids)?;
    let k = head.classes;
    let predictions = ids
        .par_iter()
        .map(|&i| {
            let v = &dataset.videos[i];
            let mut probs = vec![0.0; k];
            for s in uniform_clip_starts(v.frames.len(), sampling.length, sampling.stride, clips)? {
                let h = params.encode_backbone(&clip_at(v, s, sampling.length, sampling.stride)?)?;
                axpy(1.0, &softmax(&head.logits(&h)), &mut probs);
            }
            let best = (0..k).fold(0, |b, c| if probs[c] > probs[b] { c } else { b });
            Ok(best)
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut correct = vec![0usize; k];
    let mut class_counts = vec![0usize; k];
    for (&i, &p) in ids.iter().zip(&predictions) {
        let y = dataset.videos[i].class_label;
        class_counts[y] += 1;
        if p == y {
            correct[y] += 1;
        }
    }
    let total: usize = correct.iter().sum();
    let per_class_accuracy =
        correct.iter().zip(&class_counts).map(|(&c, &n)| if n > 0 { c as f64 / n as f64 } else { 0.0 }).collect();
    Ok(ClassificationReport {
        accuracy: total as f64 / ids.len().max(1) as f64,
        per_class_accuracy,
        class_counts,
        predictions,
    })
}

/// Trains a fresh linear head together with the backbone by SGD on
/// cross-entropy, one random clip per video per epoch, then evaluates on
/// `test_ids`. Returns the tuned backbone, the head and the test report.
#[allow(clippy::too_many_arguments)]
pub fn finetune_classifier(
    pretrained: &EncoderParams,
    dataset: &Dataset,
    train_ids: &[usize],
    test_ids: &[usize],
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    cfg: &FinetuneConfig,
    seed: u64,
) -> Result<(EncoderParams, LinearHead, ClassificationReport)> {
    cfg.validate()?;
    check_labels(dataset, train_ids)?;
    check_labels(dataset, test_ids)?;
    let classes = dataset.spec.num_classes;
    let dim = pretrained.arch.embed_dim;
    let mut params = pretrained.clone();
    let mut head = LinearHead::init(classes, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut vel = vec![0.0; params.values.len()];
    let mut head_vel = vec![0.0; head.weight.len() + head.bias.len()];
    let mut order = train_ids.to_vec();
    for epoch in 0..cfg.epochs {
        let lr = cfg.optim.lr_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let clips = chunk
                .iter()
                .map(|&i| {
                    let c = sample_clip(&dataset.videos[i], sampling.length, sampling.stride, &mut rng)?;
                    if cfg.augment {
                        augment(&c, aug, &mut rng)
                    } else {
                        Ok(c)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let inv = 1.0 / chunk.len() as f64;
            let per_sample = chunk
                .par_iter()
                .zip(clips.par_iter())
                .map(|(&i, clip)| {
                    let trace = params.backbone_forward(&clip.frames)?;
                    let mut dlogits = softmax(&head.logits(&trace.hidden));
                    dlogits[dataset.videos[i].class_label] -= 1.0;
                    dlogits.iter_mut().for_each(|d| *d *= inv);
                    let mut g = Gradients::zeros_like(&params);
                    let dh = matvec_t(&head.weight, classes, dim, &dlogits);
                    params.backbone_backward(&trace, &dh, &mut g);
                    let mut hg = vec![0.0; head.weight.len() + classes];
                    add_outer(&mut hg[..classes * dim], classes, dim, &dlogits, &trace.hidden);
                    axpy(1.0, &dlogits, &mut hg[classes * dim..]);
                    Ok((g, hg))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Gradients::zeros_like(&params);
            let mut head_grad = vec![0.0; head_vel.len()];
            for (g, hg) in &per_sample {
                grads.add_assign(g);
                axpy(1.0, hg, &mut head_grad);
            }
            sgd_step(&mut params, &mut vel, &grads, lr, &cfg.optim)?;
            let o = &cfg.optim;
            let n_w = head.weight.len();
            for (j, (v, g)) in head_vel.iter_mut().zip(&head_grad).enumerate() {
                let w = if j < n_w { &mut head.weight[j] } else { &mut head.bias[j - n_w] };
                *v = o.momentum * *v + g + o.weight_decay * *w;
                *w -= lr * *v;
            }
            if !params.is_finite() {
                return Err(Error::NonFinite { step: epoch as u64, detail: "finetuning diverged".into() });
            }
        }
    }
    let report = evaluate_classifier(&params, &head, dataset, test_ids, sampling, cfg.eval_clips)?;
    Ok((params, head, report))
}
