//! Tiny temporal encoder with a clip projection head and a dual projection
//! head, plus the hand-written backward passes used for training.
//!
//! Backbone: per-frame `tanh(W1 x + b1)`, mean over frames, then `W2 m + b2`.
//! Clip head: `normalize(Wc h + bc)`.
//! Dual head: the backbone runs on each sub-clip independently, then
//! `normalize(Wo tanh(Wh h + bh) + bo)` per sub-clip.

mod feature;
mod forward;
mod params;

pub use feature::{DualRep, Feature};
pub use forward::{BackboneTrace, ClipTrace, DualTrace, HeadTrace, OrderTrace};
pub use params::{Architecture, Block, EncoderParams, Gradients, Layout};
