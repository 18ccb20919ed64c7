use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};
use crate::linalg;

/// Number of sinusoidal components summed into each video's drift path.
const DRIFT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub frame_dim: usize,
    /// Pairwise distance between class centroids.
    pub class_separation: f64,
    /// Per-dimension std of the static offset of a video from its class centroid.
    pub video_spread: f64,
    /// Per-dimension amplitude of the smooth within-video drift.
    pub drift_scale: f64,
    /// Per-dimension std of i.i.d. frame noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for VideoSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            videos_per_class: 24,
            frames_per_video: 64,
            frame_dim: 32,
            class_separation: 3.0,
            video_spread: 0.5,
            drift_scale: 1.0,
            noise_scale: 0.1,
            seed: 0,
        }
    }
}

impl VideoSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_classes", self.num_classes),
            ("videos_per_class", self.videos_per_class),
            ("frames_per_video", self.frames_per_video),
            ("frame_dim", self.frame_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("data.{name} must be positive")));
            }
        }
        if self.num_classes > self.frame_dim {
            return Err(Error::config(format!(
                "data.num_classes ({}) must not exceed data.frame_dim ({})",
                self.num_classes, self.frame_dim
            )));
        }
        let scales = [
            ("class_separation", self.class_separation),
            ("video_spread", self.video_spread),
            ("drift_scale", self.drift_scale),
            ("noise_scale", self.noise_scale),
        ];
        for (name, v) in scales {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("data.{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: usize,
    pub class_label: usize,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: VideoSpec,
    pub videos: Vec<Video>,
    pub class_centroids: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.class_label).collect()
    }
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, std: f64) -> Vec<f64> {
    (0..dim).map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng)).collect::<Vec<f64>>()
}

/// Orthonormal vectors via Gram-Schmidt on Gaussian draws.
fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian_vec(rng, dim, 1.0);
        for b in &basis {
            let p = linalg::dot(&v, b);
            linalg::axpy(-p, b, &mut v);
        }
        if let Ok((u, n)) = linalg::normalize(&v) {
            if n > 1e-6 {
                basis.push(u);
            }
        }
    }
    basis
}

/// Generates `num_classes * videos_per_class` videos ordered by class.
///
/// Class centroids are `class_separation / sqrt(2)` times a random orthonormal
/// set, so every pair sits exactly `class_separation` apart.
pub fn generate_dataset(spec: &VideoSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.frame_dim;
    let radius = spec.class_separation / std::f64::consts::SQRT_2;
    let class_centroids: Vec<Vec<f64>> = random_orthonormal(&mut rng, spec.num_classes, dim)
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * radius).collect())
        .collect();

    let t_len = spec.frames_per_video as f64;
    let mut videos = Vec::with_capacity(spec.num_classes * spec.videos_per_class);
    for (label, centroid) in class_centroids.iter().enumerate() {
        for _ in 0..spec.videos_per_class {
            let mut center = gaussian_vec(&mut rng, dim, spec.video_spread);
            linalg::axpy(1.0, centroid, &mut center);

            // drift(t) = drift_scale / sqrt(J) * sum_j a_j sin(2 pi w_j t / T + phi_j)
            let components: Vec<(Vec<f64>, f64, f64)> = (0..DRIFT_COMPONENTS)
                .map(|_| {
                    let dir = gaussian_vec(&mut rng, dim, 1.0);
                    let freq = rng.random_range(0.5..1.5);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    (dir, freq, phase)
                })
                .collect();
            let drift_amp = spec.drift_scale / (DRIFT_COMPONENTS as f64).sqrt();

            let frames = (0..spec.frames_per_video)
                .map(|t| {
                    let mut x = center.clone();
                    if drift_amp > 0.0 {
                        for (dir, freq, phase) in &components {
                            let s = (std::f64::consts::TAU * freq * t as f64 / t_len + phase).sin();
                            linalg::axpy(drift_amp * s, dir, &mut x);
                        }
                    }
                    if spec.noise_scale > 0.0 {
                        let noise = gaussian_vec(&mut rng, dim, spec.noise_scale);
                        linalg::axpy(1.0, &noise, &mut x);
                    }
                    x
                })
                .collect();
            videos.push(Video { id: videos.len(), class_label: label, frames });
        }
    }
    Ok(Dataset { spec: spec.clone(), videos, class_centroids })
}

/// Splits video indices per class: the first `ceil(train_fraction * n)` videos
/// of each class go to training, the rest to test.
pub fn split_train_test(dataset: &Dataset, train_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!("train_fraction must be in (0,1), got {train_fraction}")));
    }
    let per_class = dataset.spec.videos_per_class;
    let n_train = ((train_fraction * per_class as f64).ceil() as usize).min(per_class);
    if n_train == 0 || n_train == per_class {
        return Err(Error::config(format!(
            "train_fraction {train_fraction} leaves an empty split with {per_class} videos per class"
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut seen = vec![0usize; dataset.spec.num_classes];
    for v in &dataset.videos {
        if seen[v.class_label] < n_train {
            train.push(v.id);
        } else {
            test.push(v.id);
        }
        seen[v.class_label] += 1;
    }
    Ok((train, test))
}
