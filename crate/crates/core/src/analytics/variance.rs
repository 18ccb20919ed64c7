use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::sq_dist;

/// Clip features of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub video_id: usize,
    pub features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub sigma_inter: f64,
    pub sigma_intra: f64,
    /// `sigma_inter / sigma_intra`; `+inf` when `sigma_intra == 0`.
    pub discrimination: f64,
    pub per_video_means: BTreeMap<usize, Vec<f64>>,
}

/// `mu_k` is the plain mean of video `k`'s features,
/// `sigma_intra = (1/N) sum_k (1/|S_k|) sum_{z in S_k} |z - mu_k|^2` and
/// `sigma_inter = (1/(N(N-1))) sum_{i<j} |mu_i - mu_j|^2`.
pub fn compute_variances(videos: &[VideoFeatures]) -> Result<VarianceReport> {
    let n = videos.len();
    if n < 2 {
        return Err(Error::config(format!("inter-video variance needs at least 2 videos, got {n}")));
    }
    let dim = videos
        .iter()
        .flat_map(|v| v.features.first())
        .map(Vec::len)
        .next()
        .ok_or_else(|| Error::shape("no features"))?;
    let mut means = Vec::with_capacity(n);
    let mut intra = 0.0;
    for v in videos {
        if v.features.is_empty() {
            return Err(Error::shape(format!("video {} has no clip features", v.video_id)));
        }
        if v.features.iter().any(|f| f.len() != dim) {
            return Err(Error::shape(format!("video {} has features of mixed dimension", v.video_id)));
        }
        let m = v.features.len() as f64;
        // Offsets from the first feature keep the mean of identical features exact.
        let base = &v.features[0];
        let mut mu = vec![0.0; dim];
        for f in &v.features[1..] {
            for ((a, b), z) in mu.iter_mut().zip(f).zip(base) {
                *a += b - z;
            }
        }
        mu.iter_mut().zip(base).for_each(|(a, z)| *a = z + *a / m);
        intra += v.features.iter().map(|f| sq_dist(f, &mu)).sum::<f64>() / m;
        means.push(mu);
    }
    let sigma_intra = intra / n as f64;
    let mut inter = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            inter += sq_dist(&means[i], &means[j]);
        }
    }
    let sigma_inter = inter / (n * (n - 1)) as f64;
    let discrimination = if sigma_intra > 0.0 { sigma_inter / sigma_intra } else { f64::INFINITY };
    let mut per_video_means = BTreeMap::new();
    for (v, mu) in videos.iter().zip(means) {
        if per_video_means.insert(v.video_id, mu).is_some() {
            return Err(Error::config(format!("video {} listed twice", v.video_id)));
        }
    }
    Ok(VarianceReport { sigma_inter, sigma_intra, discrimination, per_video_means })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vf(id: usize, f: &[[f64; 2]]) -> VideoFeatures {
        VideoFeatures { video_id: id, features: f.iter().map(|x| x.to_vec()).collect() }
    }

    #[test]
    fn two_axis_videos() {
        let r = compute_variances(&[vf(0, &[[1.0, 0.0], [1.0, 0.0]]), vf(1, &[[0.0, 1.0], [0.0, 1.0]])]).unwrap();
        assert_eq!(r.sigma_intra, 0.0);
        assert_eq!(r.sigma_inter, 1.0);
        assert_eq!(r.discrimination, f64::INFINITY);
    }

    #[test]
    fn identical_everything() {
        let r = compute_variances(&[vf(0, &[[0.6, 0.8]]), vf(1, &[[0.6, 0.8]])]).unwrap();
        assert_eq!((r.sigma_intra, r.sigma_inter), (0.0, 0.0));
    }

    #[test]
    fn single_video_or_duplicate_rejected() {
        assert!(compute_variances(&[vf(0, &[[1.0, 0.0]])]).is_err());
        assert!(compute_variances(&[vf(0, &[[1.0, 0.0]]), vf(0, &[[0.0, 1.0]])]).is_err());
    }

    #[test]
    fn spread_within_video() {
        let r = compute_variances(&[vf(0, &[[1.0, 0.0], [-1.0, 0.0]]), vf(1, &[[0.0, 1.0], [0.0, -1.0]])]).unwrap();
        assert_eq!(r.sigma_intra, 1.0);
        assert_eq!(r.sigma_inter, 0.0);
        assert_eq!(r.discrimination, 0.0);
    }
}
