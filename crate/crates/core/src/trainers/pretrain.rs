use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::optim::SgdConfig;
use super::{moco_step, simclr_step, Framework, Pretext, StepMetrics, TrainState};
use crate::encoder::Architecture;
use crate::error::{Error, Result};
use crate::losses::Hyperparams;
use crate::synthetic::{factorial, AugmentConfig, ClipSampling, Dataset, Video};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub pretext: Pretext,
    pub optim: SgdConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            checkpoint_every: 0,
            pretext: Pretext::ShuffleRank,
            optim: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSetup {
    pub framework: Framework,
    pub hyper: Hyperparams,
    pub arch: Architecture,
    pub sampling: ClipSampling,
    pub augment: AugmentConfig,
    pub schedule: TrainSchedule,
    pub seed: u64,
}

impl PretrainSetup {
    pub fn validate(&self, frames_per_video: usize, frame_dim: usize) -> Result<()> {
        self.hyper.validate()?;
        self.arch.validate()?;
        self.augment.validate()?;
        self.sampling.validate(frames_per_video)?;
        self.schedule.optim.validate()?;
        let s = self.hyper.segments;
        if self.sampling.segments != s || self.arch.segments != s {
            return Err(Error::config(format!(
                "segment counts disagree: hyper {s}, clip {}, encoder {}",
                self.sampling.segments, self.arch.segments
            )));
        }
        if self.arch.frame_dim != frame_dim {
            return Err(Error::config(format!(
                "encoder.frame_dim {} does not match data.frame_dim {frame_dim}",
                self.arch.frame_dim
            )));
        }
        if self.schedule.batch_size < 2 {
            return Err(Error::config("train.batch_size must be >= 2"));
        }
        if self.framework == Framework::Moco && self.hyper.queue_size < self.schedule.batch_size {
            return Err(Error::config("hyper.queue_size must be >= train.batch_size"));
        }
        let classes = factorial(s);
        match self.schedule.pretext {
            Pretext::OrderPrediction if self.arch.order_classes != classes => Err(Error::config(format!(
                "order prediction over {s} segments needs encoder.order_classes = {classes}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainRun {
    pub state: TrainState,
    pub metrics: Vec<StepMetrics>,
}

/// Metrics table, one row per step. Order-prediction runs add an `L_op`
/// column.
pub fn metrics_csv(metrics: &[StepMetrics], pretext: Pretext) -> String {
    let op = pretext == Pretext::OrderPrediction;
    let mut out = String::from("step,epoch,L_c,L_rank_unaug,L_rank_aug,L_tc,L_total,lr");
    out.push_str(if op { ",L_op\n" } else { "\n" });
    for m in metrics {
        let l = &m.losses;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.step, m.epoch, l.l_c, l.l_rank_unaug, l.l_rank_aug, l.l_tc, l.l_total, m.lr
        );
        if op {
            let _ = write!(out, ",{}", l.l_op);
        }
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn dump_failure(out: &Path, state: &TrainState, metrics: &[StepMetrics], pretext: Pretext, err: &Error) -> Result<()> {
    let dir = out.join("nan_dump");
    state.save(&dir)?;
    write_text(&dir.join("diagnostic.txt"), &format!("{err}\nlast metrics: {:?}\n", metrics.last()))?;
    write_text(&out.join("metrics.csv"), &metrics_csv(metrics, pretext))
}

/// Runs `schedule.epochs` epochs over `train_ids`. Each epoch shuffles the
/// videos with the state rng and drops a trailing batch smaller than 2.
/// With an output directory, writes `metrics.csv`, `checkpoint/` and, if
/// requested, `checkpoints/epoch-NNNN/`; a non-finite loss writes
/// `nan_dump/` and returns the error.
pub fn pretrain(
    setup: &PretrainSetup,
    dataset: &Dataset,
    train_ids: &[usize],
    out: Option<&Path>,
) -> Result<PretrainRun> {
    setup.validate(dataset.spec.frames_per_video, dataset.spec.frame_dim)?;
    if let Some(&bad) = train_ids.iter().find(|&&i| i >= dataset.videos.len()) {
        return Err(Error::Range(format!("training video {bad} outside dataset of {}", dataset.videos.len())));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let sched = &setup.schedule;
    let mut state = TrainState::new(setup.framework, setup.hyper.clone(), setup.arch, setup.seed)?;
    let mut metrics = Vec::new();
    let mut order: Vec<usize> = train_ids.to_vec();
    for epoch in 0..sched.epochs {
        state.epoch = epoch as u64;
        order.shuffle(&mut state.rng);
        for chunk in order.chunks(sched.batch_size).filter(|c| c.len() >= 2) {
            let videos: Vec<&Video> = chunk.iter().map(|&i| &dataset.videos[i]).collect();
            let result = match setup.framework {
                Framework::Simclr => {
                    simclr_step(&mut state, &videos, &setup.sampling, &setup.augment, sched.pretext, &sched.optim)
                }
                Framework::Moco => {
                    moco_step(&mut state, &videos, &setup.sampling, &setup.augment, sched.pretext, &sched.optim)
                }
            };
            match result {
                Ok(m) => metrics.push(m),
                Err(err @ Error::NonFinite { .. }) => {
                    if let Some(dir) = out {
                        dump_failure(dir, &state, &metrics, sched.pretext, &err)?;
                    }
                    return Err(err);
                }
                Err(e) => return Err(e),
            }
        }
        if let Some(dir) = out {
            if sched.checkpoint_every > 0 && (epoch + 1) % sched.checkpoint_every == 0 {
                state.save(&dir.join("checkpoints").join(format!("epoch-{:04}", epoch + 1)))?;
            }
        }
    }
    state.epoch = sched.epochs as u64;
    if let Some(dir) = out {
        state.save(&dir.join("checkpoint"))?;
        write_text(&dir.join("metrics.csv"), &metrics_csv(&metrics, sched.pretext))?;
    }
    Ok(PretrainRun { state, metrics })
}
