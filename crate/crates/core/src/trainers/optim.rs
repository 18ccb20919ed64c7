use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderParams, Gradients};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum, L2 weight decay and step learning-rate decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { lr: 0.01, momentum: 0.9, weight_decay: 1e-4, milestones: Vec::new(), lr_decay: 0.1 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("train.optim.lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("train.optim.momentum must be in [0,1), got {}", self.momentum)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.optim.weight_decay must be >= 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("train.optim.lr_decay must be in (0,1]"));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("train.optim.milestones must be strictly increasing"));
        }
        Ok(())
    }

    /// Learning rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr * self.lr_decay.powi(passed as i32)
    }
}

/// `v <- mu v + g + wd w`, `w <- w - lr v`.
pub fn sgd_step(
    params: &mut EncoderParams,
    velocity: &mut [f64],
    grads: &Gradients,
    lr: f64,
    cfg: &SgdConfig,
) -> Result<()> {
    if velocity.len() != params.values.len() || grads.values.len() != params.values.len() {
        return Err(Error::shape("optimizer state does not match the parameter layout"));
    }
    for ((w, v), g) in params.values.iter_mut().zip(velocity.iter_mut()).zip(&grads.values) {
        *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
        *w -= lr * *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Architecture;

    #[test]
    fn step_decay_schedule() {
        let c = SgdConfig { lr: 1.0, milestones: vec![120, 160], ..SgdConfig::default() };
        assert_eq!(c.lr_at(0), 1.0);
        assert_eq!(c.lr_at(119), 1.0);
        assert!((c.lr_at(120) - 0.1).abs() < 1e-15);
        assert!((c.lr_at(199) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let arch = Architecture {
            frame_dim: 2,
            hidden_dim: 2,
            embed_dim: 2,
            proj_dim: 2,
            dual_hidden_dim: 2,
            ..Default::default()
        };
        let mut p = EncoderParams::zeros(arch).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.values.iter_mut().for_each(|v| *v = 1.0);
        let mut vel = vec![0.0; p.values.len()];
        let cfg = SgdConfig { weight_decay: 0.0, ..SgdConfig::default() };
        sgd_step(&mut p, &mut vel, &g, 0.1, &cfg).unwrap();
        assert!(p.values.iter().all(|&w| (w + 0.1).abs() < 1e-15));
        sgd_step(&mut p, &mut vel, &g, 0.1, &cfg).unwrap();
        assert!(p.values.iter().all(|&w| (w + 0.1 + 0.19).abs() < 1e-15));
    }
}
