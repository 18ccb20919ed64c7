//! Differentiable objectives. Every loss returns its value together with the
//! gradient with respect to each of its feature inputs; callers chain those
//! into the encoder's backward pass.

mod contrastive;
mod decomposition;
mod order;
mod rank;
mod tc;

use serde::{Deserialize, Serialize};

pub use contrastive::{clip_contrastive_moco, clip_contrastive_simclr, validate_pairing};
pub use decomposition::{decomposition_check, Decomposition};
pub use order::{order_prediction_batch, order_prediction_loss};
pub use rank::{
    build_ranking_sets, rank_loss_aug, rank_loss_unaug, rank_term, rank_term_slope, RankingAnchor, RankingSets,
};
pub use tc::{tc_contrast_moco, tc_contrast_simclr, tc_sim};

use crate::error::{Error, Result};

/// A scalar loss and `dL/d(input_i)` for every input, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<G> {
    pub value: f64,
    pub grads: Vec<G>,
}

/// Queue-based contrastive loss: gradients for queries, positive keys and
/// queue entries. Training detaches the latter two.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueLossGrad<G> {
    pub value: f64,
    pub d_query: Vec<G>,
    pub d_positive: Vec<G>,
    pub d_queue: Vec<G>,
}

/// Gradient pair for a `(first, second)` dual-representation pair; each is
/// one vector per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    /// Clip contrast temperature.
    pub tau: f64,
    /// Temporal-coherent contrast temperature.
    pub tau_tc: f64,
    /// Ranking temperature.
    pub theta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub segments: usize,
    pub queue_size: usize,
    pub momentum: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            tau: 0.07,
            tau_tc: 0.5,
            theta: 0.05,
            lambda1: 1.0,
            lambda2: 1.0,
            segments: 2,
            queue_size: 16384,
            momentum: 0.999,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("tau_tc", self.tau_tc), ("theta", self.theta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("hyper.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("hyper.{name} must be >= 0, got {v}")));
            }
        }
        if self.segments < 2 {
            return Err(Error::config(format!("hyper.segments must be >= 2, got {}", self.segments)));
        }
        if self.queue_size == 0 {
            return Err(Error::config("hyper.queue_size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::config(format!("hyper.momentum must be in [0,1], got {}", self.momentum)));
        }
        Ok(())
    }
}

/// `L_rank = 0.5 L_unaug + 0.5 L_aug`.
pub fn rank_loss_total(unaug: f64, aug: f64) -> f64 {
    0.5 * unaug + 0.5 * aug
}

/// `L = L_c + lambda1 L_rank + lambda2 L_tc`.
pub fn total_loss(l_c: f64, l_rank: f64, l_tc: f64, lambda1: f64, lambda2: f64) -> f64 {
    l_c + lambda1 * l_rank + lambda2 * l_tc
}
