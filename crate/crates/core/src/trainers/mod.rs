//! Pretraining loops: in-batch (SimCLR-style) and momentum-queue
//! (MoCo-style), with SGD and step learning-rate decay.
//!
//! Per-sample forward and backward passes run on the rayon pool; per-sample
//! gradients are always reduced in batch order, so results do not depend on
//! the worker count.

mod batch;
mod moco;
mod optim;
mod pretrain;
mod queue;
mod simclr;
mod state;

use serde::{Deserialize, Serialize};

pub use batch::{sample_batch, BatchItem};
pub use moco::{detach, moco_gradients, moco_loss, moco_step, MocoGradients};
pub use optim::{sgd_step, SgdConfig};
pub use pretrain::{metrics_csv, pretrain, PretrainRun, PretrainSetup, TrainSchedule};
pub use queue::NegativeQueue;
pub use simclr::{contrast_only_gradients, contrast_only_step, simclr_gradients, simclr_step};
pub use state::TrainState;

use crate::losses::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Simclr,
    Moco,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::Simclr => "simclr",
            Framework::Moco => "moco",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simclr" => Some(Framework::Simclr),
            "moco" => Some(Framework::Moco),
            _ => None,
        }
    }
}

/// Pretext task carried by the dual representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pretext {
    /// Shuffle the sub-clips of the augmented clip and rank same-segment
    /// features above cross-segment ones.
    #[default]
    ShuffleRank,
    /// Baseline: classify which of the `S!` orders the sub-clips were put in.
    OrderPrediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Contrast,
    RankUnaug,
    RankAug,
    Tc,
    Order,
}

/// Per-term weights of the training objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub contrast: f64,
    pub rank_unaug: f64,
    pub rank_aug: f64,
    pub tc: f64,
    pub order: f64,
}

impl LossWeights {
    /// `L_c + lambda1 (0.5 L_unaug + 0.5 L_aug) + lambda2 L_tc`, with the
    /// order loss standing in for the ranking loss under that pretext.
    pub fn from_hyper(h: &Hyperparams, pretext: Pretext) -> Self {
        let (rank, order) = match pretext {
            Pretext::ShuffleRank => (0.5 * h.lambda1, 0.0),
            Pretext::OrderPrediction => (0.0, h.lambda1),
        };
        Self { contrast: 1.0, rank_unaug: rank, rank_aug: rank, tc: h.lambda2, order }
    }

    /// Unit weight on a single term.
    pub fn only(term: LossTerm) -> Self {
        let mut w = Self { contrast: 0.0, rank_unaug: 0.0, rank_aug: 0.0, tc: 0.0, order: 0.0 };
        match term {
            LossTerm::Contrast => w.contrast = 1.0,
            LossTerm::RankUnaug => w.rank_unaug = 1.0,
            LossTerm::RankAug => w.rank_aug = 1.0,
            LossTerm::Tc => w.tc = 1.0,
            LossTerm::Order => w.order = 1.0,
        }
        w
    }
}

/// Unweighted loss values of one step plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_c: f64,
    pub l_rank_unaug: f64,
    pub l_rank_aug: f64,
    pub l_tc: f64,
    pub l_op: f64,
    pub l_total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_c, self.l_rank_unaug, self.l_rank_aug, self.l_tc, self.l_op, self.l_total].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: u64,
    pub losses: LossBreakdown,
    pub lr: f64,
}
