//! Dual-representation self-supervised learning on synthetic videos.
//!
//! Clips are encoded both as a single clip feature and as a *dual
//! representation*, one feature per temporal sub-clip. Training combines
//! the clip contrastive loss with a shuffle-rank pretext loss (encodes
//! intra-video variance) and a temporal-coherent contrastive loss over dual
//! representations (encodes inter-video variance), in SimCLR-style and
//! MoCo-style loops. The analytics measure inter/intra feature variance,
//! retrieval and finetuning accuracy.

pub mod analytics;
pub mod binio;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod synthetic;
pub mod trainers;
pub mod verify;

pub use error::{Error, Result};
