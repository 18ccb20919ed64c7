use super::features::video_features;
use super::finetune::{finetune_classifier, FinetuneConfig};
use super::retrieval::{retrieval_topk, RetrievalResult};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::synthetic::{ClipSampling, Dataset};
use crate::trainers::{pretrain, PretrainSetup};

pub const DEFAULT_THETAS: [f64; 5] = [1.0, 0.5, 0.1, 0.05, 0.01];

/// Test videos query a gallery of training videos.
pub fn retrieval_eval(
    params: &EncoderParams,
    dataset: &Dataset,
    train_ids: &[usize],
    test_ids: &[usize],
    sampling: &ClipSampling,
    clips: usize,
    k_list: &[usize],
) -> Result<RetrievalResult> {
    let gallery = video_features(params, dataset, train_ids, sampling, clips)?;
    let queries = video_features(params, dataset, test_ids, sampling, clips)?;
    let label = |ids: &[usize]| ids.iter().map(|&i| dataset.videos[i].class_label).collect::<Vec<_>>();
    retrieval_topk(&queries, &label(test_ids), &gallery, &label(train_ids), k_list)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaRow {
    pub theta: f64,
    pub retrieval_top1: f64,
    pub finetune_accuracy: f64,
}

/// Pretrains once per `theta` with everything else (seed, data, schedule)
/// fixed, then measures top-1 retrieval and finetuned accuracy.
pub fn theta_sweep(
    setup: &PretrainSetup,
    dataset: &Dataset,
    train_ids: &[usize],
    test_ids: &[usize],
    thetas: &[f64],
    finetune: &FinetuneConfig,
    clips: usize,
) -> Result<Vec<ThetaRow>> {
    if thetas.is_empty() {
        return Err(Error::config("theta sweep needs at least one value"));
    }
    thetas
        .iter()
        .map(|&theta| {
            let mut s = setup.clone();
            s.hyper.theta = theta;
            let run = pretrain(&s, dataset, train_ids, None)?;
            let ret = retrieval_eval(&run.state.query, dataset, train_ids, test_ids, &s.sampling, clips, &[1])?;
            let (_, _, rep) = finetune_classifier(
                &run.state.query,
                dataset,
                train_ids,
                test_ids,
                &s.sampling,
                &s.augment,
                finetune,
                s.seed,
            )?;
            Ok(ThetaRow { theta, retrieval_top1: ret.accuracy[0], finetune_accuracy: rep.accuracy })
        })
        .collect()
}

pub fn theta_sweep_csv(rows: &[ThetaRow]) -> String {
    let mut out = String::from("theta,retrieval_top1,finetune_accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.theta, r.retrieval_top1, r.finetune_accuracy));
    }
    out
}
