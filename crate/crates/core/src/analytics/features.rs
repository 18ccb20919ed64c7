use rayon::prelude::*;

use super::variance::VideoFeatures;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::linalg::normalize;
use crate::synthetic::{clip_at, uniform_clip_starts, ClipSampling, Dataset, Video};

/// Clips per video for video-level features.
pub const EVAL_CLIPS: usize = 10;

/// Unit-normalized backbone features of `count` uniformly placed clips.
pub fn clip_features(
    params: &EncoderParams,
    video: &Video,
    sampling: &ClipSampling,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    uniform_clip_starts(video.frames.len(), sampling.length, sampling.stride, count)?
        .into_iter()
        .map(|s| {
            let clip = clip_at(video, s, sampling.length, sampling.stride)?;
            Ok(normalize(&params.encode_backbone(&clip)?)?.0)
        })
        .collect()
}

/// Mean of [`clip_features`], renormalized.
pub fn video_feature(params: &EncoderParams, video: &Video, sampling: &ClipSampling, count: usize) -> Result<Vec<f64>> {
    let feats = clip_features(params, video, sampling, count)?;
    let first = feats.first().ok_or_else(|| Error::config("video-level feature needs at least one clip"))?;
    let mut mean = vec![0.0; first.len()];
    for f in &feats {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    Ok(normalize(&mean)?.0)
}

fn videos<'a>(dataset: &'a Dataset, ids: &[usize]) -> Result<Vec<&'a Video>> {
    ids.iter()
        .map(|&i| dataset.videos.get(i).ok_or_else(|| Error::Range(format!("video {i} not in dataset"))))
        .collect()
}

pub fn video_features(
    params: &EncoderParams,
    dataset: &Dataset,
    ids: &[usize],
    sampling: &ClipSampling,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    videos(dataset, ids)?.par_iter().map(|v| video_feature(params, v, sampling, count)).collect()
}

/// Clip features grouped by video, as consumed by the variance analysis.
pub fn grouped_clip_features(
    params: &EncoderParams,
    dataset: &Dataset,
    ids: &[usize],
    sampling: &ClipSampling,
    count: usize,
) -> Result<Vec<VideoFeatures>> {
    videos(dataset, ids)?
        .par_iter()
        .map(|v| Ok(VideoFeatures { video_id: v.id, features: clip_features(params, v, sampling, count)? }))
        .collect()
}
