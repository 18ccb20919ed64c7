use std::fmt::Write as _;

use super::features::video_features;
use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::synthetic::{ClipSampling, Dataset};

/// Tab-separated video-level features: a header line, then one row per
/// video with `video_id`, `label` and the feature values in `%.16e`
/// (17 significant digits).
pub fn export_embeddings(
    params: &EncoderParams,
    dataset: &Dataset,
    sampling: &ClipSampling,
    clips: usize,
) -> Result<String> {
    let ids: Vec<usize> = (0..dataset.videos.len()).collect();
    let feats = video_features(params, dataset, &ids, sampling, clips)?;
    let dim = feats.first().map_or(0, Vec::len);
    let mut out = String::from("video_id\tlabel");
    for j in 0..dim {
        let _ = write!(out, "\tf{j}");
    }
    out.push('\n');
    for (v, f) in dataset.videos.iter().zip(&feats) {
        let _ = write!(out, "{}\t{}", v.id, v.class_label);
        for x in f {
            let _ = write!(out, "\t{x:.16e}");
        }
        out.push('\n');
    }
    Ok(out)
}
