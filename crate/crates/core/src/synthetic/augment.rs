//! Temporally consistent clip augmentation.
//!
//! Synthetic stand-ins for image augmentation: an additive offset (color
//! jitter), a per-dimension gain (brightness), and a contiguous window of
//! retained dimensions with the rest zeroed (crop). One draw covers the whole
//! clip, so every frame receives the identical transform.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Clip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Per-dimension std of the additive offset.
    pub jitter_scale: f64,
    /// Gains are drawn uniformly from `[lo, hi]`.
    pub channel_scale_range: (f64, f64),
    /// Fraction of dimensions kept by the crop window, in (0, 1].
    pub crop_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { jitter_scale: 0.5, channel_scale_range: (0.8, 1.2), crop_fraction: 0.875 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self { jitter_scale: 0.0, channel_scale_range: (1.0, 1.0), crop_fraction: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.channel_scale_range;
        if !(self.jitter_scale.is_finite() && self.jitter_scale >= 0.0) {
            return Err(Error::config(format!("augment.jitter_scale must be >= 0, got {}", self.jitter_scale)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::config(format!("augment.channel_scale_range [{lo}, {hi}] is not an interval")));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::config(format!("augment.crop_fraction must be in (0,1], got {}", self.crop_fraction)));
        }
        Ok(())
    }
}

/// One concrete augmentation draw.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    pub jitter: Vec<f64>,
    pub gain: Vec<f64>,
    pub window_start: usize,
    pub window_len: usize,
}

impl AugmentParams {
    pub fn draw<R: Rng + ?Sized>(cfg: &AugmentConfig, dim: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let jitter = if cfg.jitter_scale > 0.0 {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    cfg.jitter_scale * z
                })
                .collect()
        } else {
            vec![0.0; dim]
        };
        let (lo, hi) = cfg.channel_scale_range;
        let gain = if hi > lo { (0..dim).map(|_| rng.random_range(lo..=hi)).collect() } else { vec![lo; dim] };
        let window_len = ((cfg.crop_fraction * dim as f64).ceil() as usize).clamp(1, dim.max(1));
        let window_start = if window_len < dim { rng.random_range(0..=dim - window_len) } else { 0 };
        Ok(Self { jitter, gain, window_start, window_len })
    }

    /// `x' = mask * (gain * x + jitter)`.
    pub fn apply_frame(&self, frame: &[f64]) -> Vec<f64> {
        let window = self.window_start..self.window_start + self.window_len;
        frame
            .iter()
            .enumerate()
            .map(|(d, &x)| if window.contains(&d) { self.gain[d] * x + self.jitter[d] } else { 0.0 })
            .collect()
    }
}

pub fn augment_with(clip: &Clip, params: &AugmentParams) -> Result<Clip> {
    let dim = clip.frame_dim();
    if params.jitter.len() != dim || params.gain.len() != dim {
        return Err(Error::shape(format!("augmentation drawn for dim {} applied to dim {dim}", params.jitter.len())));
    }
    Ok(Clip { frames: clip.frames.iter().map(|f| params.apply_frame(f)).collect(), ..clip.clone() })
}

pub fn augment<R: Rng + ?Sized>(clip: &Clip, cfg: &AugmentConfig, rng: &mut R) -> Result<Clip> {
    let params = AugmentParams::draw(cfg, clip.frame_dim(), rng)?;
    augment_with(clip, &params)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn clip() -> Clip {
        Clip {
            video_id: 0,
            start_frame: 0,
            stride: 1,
            frames: (0..6).map(|t| (0..8).map(|d| (t * 8 + d) as f64 * 0.1).collect()).collect(),
        }
    }

    #[test]
    fn identity_config_is_identity() {
        let c = clip();
        let out = augment(&c, &AugmentConfig::identity(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let c = clip();
        let cfg = AugmentConfig::default();
        let a = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jitter_is_the_same_for_every_frame() {
        let c = clip();
        let cfg = AugmentConfig { jitter_scale: 0.7, channel_scale_range: (1.0, 1.0), crop_fraction: 1.0 };
        let out = augment(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let delta = |t: usize| -> Vec<f64> { out.frames[t].iter().zip(&c.frames[t]).map(|(a, b)| a - b).collect() };
        let d0 = delta(0);
        assert!(d0.iter().any(|x| x.abs() > 1e-3));
        for t in 1..c.len() {
            for (a, b) in delta(t).iter().zip(&d0) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crop_keeps_a_contiguous_window() {
        let c = clip();
        let cfg = AugmentConfig { jitter_scale: 0.0, channel_scale_range: (1.0, 1.0), crop_fraction: 0.5 };
        let p = AugmentParams::draw(&cfg, 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p.window_len, 4);
        let out = augment_with(&c, &p).unwrap();
        for (f_out, f_in) in out.frames.iter().zip(&c.frames) {
            for d in 0..8 {
                let kept = d >= p.window_start && d < p.window_start + 4;
                assert_eq!(f_out[d], if kept { f_in[d] } else { 0.0 });
            }
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = AugmentConfig { crop_fraction: 0.0, ..AugmentConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = AugmentConfig { channel_scale_range: (2.0, 1.0), ..AugmentConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
