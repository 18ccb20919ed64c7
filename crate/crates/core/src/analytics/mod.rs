//! Evaluation: inter/intra-video feature variance, top-k retrieval,
//! finetuned classification, per-class deltas, the ranking-temperature
//! sweep and embedding export.
//!
//! Variance and retrieval use unit-normalized backbone features. A
//! video-level feature is the mean of ten uniformly placed clip features,
//! renormalized.

mod export;
mod features;
mod finetune;
mod per_class;
mod retrieval;
mod sweep;
mod variance;

pub use export::export_embeddings;
pub use features::{clip_features, grouped_clip_features, video_feature, video_features, EVAL_CLIPS};
pub use finetune::{evaluate_classifier, finetune_classifier, ClassificationReport, FinetuneConfig, LinearHead};
pub use per_class::{per_class_csv, per_class_improvement, weighted_delta, ClassDelta};
pub use retrieval::{retrieval_topk, RetrievalResult, DEFAULT_TOPK};
pub use sweep::{retrieval_eval, theta_sweep, theta_sweep_csv, ThetaRow, DEFAULT_THETAS};
pub use variance::{compute_variances, VarianceReport, VideoFeatures};
