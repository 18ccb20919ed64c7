//! Synthetic labeled videos with controllable inter- and intra-video variance.
//!
//! A video is a sequence of `frame_dim` vectors. Each class owns a centroid,
//! each video sits at its class centroid plus a static per-video offset, and
//! frames follow a smooth drift path around the video centroid with i.i.d.
//! per-frame noise. `drift_scale` controls how much a video's content changes
//! over time (intra-video variance); `class_separation` and `video_spread`
//! control inter-video variance.

mod augment;
mod clip;
mod io;
mod video;

pub use augment::{augment, augment_with, AugmentConfig, AugmentParams};
pub use clip::{
    clip_at, concat_subclips, factorial, make_training_tuple, sample_clip, shuffle_subclips, split_subclips,
    uniform_clip_starts, unshuffle_subclips, Clip, ClipSampling, Permutation, TrainingTuple,
};
pub use io::{load_dataset, save_dataset};
pub use video::{generate_dataset, split_train_test, Dataset, Video, VideoSpec};

pub type Frame = Vec<f64>;
