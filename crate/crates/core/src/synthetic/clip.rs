use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment_with, AugmentConfig, AugmentParams};
use super::{Frame, Video};
use crate::error::{Error, Result};

/// A strided run of frames from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub video_id: usize,
    pub start_frame: usize,
    pub stride: usize,
    pub frames: Vec<Frame>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// How clips are cut from a video and split into sub-clips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClipSampling {
    pub length: usize,
    pub stride: usize,
    pub segments: usize,
}

impl Default for ClipSampling {
    fn default() -> Self {
        Self { length: 8, stride: 2, segments: 2 }
    }
}

impl ClipSampling {
    pub fn validate(&self, frames_per_video: usize) -> Result<()> {
        if self.length == 0 || self.stride == 0 {
            return Err(Error::config("clip length and stride must be positive"));
        }
        if self.segments < 2 {
            return Err(Error::config(format!("segments must be >= 2, got {}", self.segments)));
        }
        if !self.length.is_multiple_of(self.segments) {
            return Err(Error::config(format!(
                "clip length {} is not divisible by {} segments",
                self.length, self.segments
            )));
        }
        if self.length * self.stride > frames_per_video {
            return Err(Error::config(format!(
                "clip length {} x stride {} exceeds frames_per_video {}",
                self.length, self.stride, frames_per_video
            )));
        }
        Ok(())
    }
}

/// Segment order of a shuffled clip: segment `j` of the shuffled clip is
/// segment `order[j]` of the original (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &p) in self.0.iter().enumerate() {
            inv[p] = j;
        }
        Permutation(inv)
    }

    /// Lexicographic rank among all `n!` permutations.
    pub fn index(&self) -> usize {
        let n = self.0.len();
        let mut rank = 0;
        for i in 0..n {
            let smaller_after = self.0[i + 1..].iter().filter(|&&x| x < self.0[i]).count();
            rank = rank * (n - i) + smaller_after;
        }
        rank
    }

    pub fn from_index(n: usize, mut index: usize) -> Self {
        let mut pool: Vec<usize> = (0..n).collect();
        let mut fact: Vec<usize> = vec![1; n + 1];
        for i in 1..=n {
            fact[i] = fact[i - 1] * i;
        }
        let mut out = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let q = index / fact[i];
            index %= fact[i];
            out.push(pool.remove(q));
        }
        Permutation(out)
    }

    /// Reorders `items` the same way segments were reordered.
    pub fn apply<T: Clone>(&self, items: &[T]) -> Vec<T> {
        self.0.iter().map(|&p| items[p].clone()).collect()
    }
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Samples `length` frames spaced `stride` apart, with a uniform start in
/// `[0, frames - length * stride]`.
pub fn sample_clip<R: Rng + ?Sized>(video: &Video, length: usize, stride: usize, rng: &mut R) -> Result<Clip> {
    let total = video.frames.len();
    if length == 0 || stride == 0 || length * stride > total {
        return Err(Error::Range(format!(
            "clip of length {length} x stride {stride} does not fit a {total}-frame video"
        )));
    }
    let start = rng.random_range(0..=total - length * stride);
    clip_at(video, start, length, stride)
}

/// The clip of `length` frames `stride` apart starting at frame `start`.
pub fn clip_at(video: &Video, start: usize, length: usize, stride: usize) -> Result<Clip> {
    let total = video.frames.len();
    if length == 0 || stride == 0 || start + length * stride > total {
        return Err(Error::Range(format!(
            "clip at {start} of length {length} x stride {stride} does not fit a {total}-frame video"
        )));
    }
    let frames = (0..length).map(|i| video.frames[start + i * stride].clone()).collect();
    Ok(Clip { video_id: video.id, start_frame: start, stride, frames })
}

/// `count` clip start positions spread uniformly over the video.
pub fn uniform_clip_starts(frames: usize, length: usize, stride: usize, count: usize) -> Result<Vec<usize>> {
    if length * stride > frames {
        return Err(Error::Range(format!(
            "clip of length {length} x stride {stride} does not fit a {frames}-frame video"
        )));
    }
    let last = frames - length * stride;
    Ok(match count {
        0 => Vec::new(),
        1 => vec![last / 2],
        _ => (0..count).map(|j| ((j * last) as f64 / (count - 1) as f64).round() as usize).collect(),
    })
}

pub fn split_subclips(clip: &Clip, segments: usize) -> Result<Vec<Clip>> {
    if segments == 0 || !clip.len().is_multiple_of(segments) {
        return Err(Error::shape(format!(
            "clip of {} frames cannot be split into {segments} equal segments",
            clip.len()
        )));
    }
    let seg = clip.len() / segments;
    Ok(clip
        .frames
        .chunks(seg)
        .enumerate()
        .map(|(k, chunk)| Clip {
            video_id: clip.video_id,
            start_frame: clip.start_frame + k * seg * clip.stride,
            stride: clip.stride,
            frames: chunk.to_vec(),
        })
        .collect())
}

/// Joins sub-clips back into one clip, keeping the first sub-clip's metadata.
pub fn concat_subclips(parts: &[Clip]) -> Result<Clip> {
    let first = parts.first().ok_or_else(|| Error::shape("no sub-clips to concatenate"))?;
    Ok(Clip {
        video_id: first.video_id,
        start_frame: first.start_frame,
        stride: first.stride,
        frames: parts.iter().flat_map(|p| p.frames.iter().cloned()).collect(),
    })
}

fn reorder(clip: &Clip, segments: usize, order: &Permutation) -> Result<Clip> {
    let parts = split_subclips(clip, segments)?;
    let mut out = concat_subclips(&order.apply(&parts))?;
    out.start_frame = clip.start_frame;
    Ok(out)
}

/// Shuffles sub-clip order. Two segments are always swapped; for more
/// segments a uniformly random non-identity order is drawn.
pub fn shuffle_subclips<R: Rng + ?Sized>(clip: &Clip, segments: usize, rng: &mut R) -> Result<(Clip, Permutation)> {
    if segments < 2 {
        return Err(Error::config(format!("shuffling needs at least 2 segments, got {segments}")));
    }
    let perm = if segments == 2 {
        Permutation(vec![1, 0])
    } else {
        let mut order: Vec<usize> = (0..segments).collect();
        loop {
            order.shuffle(rng);
            if order.iter().enumerate().any(|(i, &p)| i != p) {
                break Permutation(order);
            }
        }
    };
    Ok((reorder(clip, segments, &perm)?, perm))
}

/// Inverse of [`shuffle_subclips`] given its permutation.
pub fn unshuffle_subclips(shuffled: &Clip, perm: &Permutation) -> Result<Clip> {
    reorder(shuffled, perm.len(), &perm.inverse())
}

/// `(c, c_hat, s_hat)`: the raw clip, its augmentation, and the shuffled
/// augmentation (same augmentation draw as `c_hat`).
#[derive(Debug, Clone)]
pub struct TrainingTuple {
    pub clip: Clip,
    pub augmented: Clip,
    pub shuffled: Clip,
    pub permutation: Permutation,
    pub augment: AugmentParams,
}

pub fn make_training_tuple<R: Rng + ?Sized>(
    video: &Video,
    sampling: &ClipSampling,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Result<TrainingTuple> {
    let clip = sample_clip(video, sampling.length, sampling.stride, rng)?;
    let params = AugmentParams::draw(aug, clip.frame_dim(), rng)?;
    let augmented = augment_with(&clip, &params)?;
    let (shuffled, permutation) = shuffle_subclips(&augmented, sampling.segments, rng)?;
    Ok(TrainingTuple { clip, augmented, shuffled, permutation, augment: params })
}
