//! Experiment configuration: a TOML file layered over defaults, with
//! `section.key=value` overrides on top.
//!
//! ```toml
//! framework = "simclr"     # or "moco"
//! seed = 0
//!
//! [hyper]
//! lambda1 = 0.03
//! queue_size = 256
//!
//! [data]
//! frame_dim = 32
//! drift_scale = 1.0
//!
//! [train]
//! epochs = 30
//! optim = { lr = 0.01, milestones = [20] }
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{FinetuneConfig, DEFAULT_THETAS, DEFAULT_TOPK, EVAL_CLIPS};
use crate::encoder::Architecture;
use crate::error::{Error, Result};
use crate::losses::Hyperparams;
use crate::synthetic::{AugmentConfig, ClipSampling, VideoSpec};
use crate::trainers::{Framework, PretrainSetup, TrainSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Fraction of each class used for training (finetuning, retrieval gallery).
    pub train_fraction: f64,
    /// Uniform clips averaged into one video-level feature.
    pub clips: usize,
    pub topk: Vec<usize>,
    /// Pretrained state directory read by finetune, retrieve and analyze-variance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { train_fraction: 0.5, clips: EVAL_CLIPS, topk: DEFAULT_TOPK.to_vec(), checkpoint: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { thetas: DEFAULT_THETAS.to_vec() }
    }
}

/// Settings of the finite-difference and brute-force verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub seeds: usize,
    pub batch_size: usize,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Random instances per oracle suite.
    pub instances: usize,
    pub oracle_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seeds: 5, batch_size: 4, step: 1e-5, tolerance: 1e-4, instances: 20, oracle_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub framework: Framework,
    pub seed: u64,
    /// Run directory; when absent the CLI picks `<output root>/<subcommand>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
    /// Read the dataset from this directory instead of generating `[data]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
    pub hyper: Hyperparams,
    pub data: VideoSpec,
    pub augment: AugmentConfig,
    pub clip: ClipSampling,
    pub encoder: Architecture,
    pub train: TrainSchedule,
    pub finetune: FinetuneConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            framework: Framework::Simclr,
            seed: 0,
            out_dir: None,
            workers: 0,
            dataset_dir: None,
            hyper: Hyperparams::default(),
            data: VideoSpec::default(),
            augment: AugmentConfig::default(),
            clip: ClipSampling::default(),
            encoder: Architecture::default(),
            train: TrainSchedule::default(),
            finetune: FinetuneConfig::default(),
            eval: EvalConfig::default(),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn pretrain_setup(&self) -> PretrainSetup {
        PretrainSetup {
            framework: self.framework,
            hyper: self.hyper.clone(),
            arch: self.encoder,
            sampling: self.clip,
            augment: self.augment.clone(),
            schedule: self.train.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.pretrain_setup().validate(self.data.frames_per_video, self.data.frame_dim)?;
        self.finetune.validate().map_err(|e| prefix("finetune", e))?;
        let e = &self.eval;
        if !(e.train_fraction > 0.0 && e.train_fraction < 1.0) {
            return Err(Error::config(format!("eval.train_fraction must be in (0,1), got {}", e.train_fraction)));
        }
        if e.clips == 0 {
            return Err(Error::config("eval.clips must be positive"));
        }
        if e.topk.is_empty() || e.topk.contains(&0) {
            return Err(Error::config("eval.topk must be a non-empty list of positive ranks"));
        }
        if self.sweep.thetas.is_empty() || self.sweep.thetas.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::config("sweep.thetas must be a non-empty list of positive values"));
        }
        let v = &self.verify;
        if v.seeds == 0 || v.instances == 0 || !(2..=8).contains(&v.batch_size) {
            return Err(Error::config(
                "verify.seeds and verify.instances must be positive, verify.batch_size in 2..=8",
            ));
        }
        if !(v.step > 0.0 && v.tolerance > 0.0 && v.oracle_tolerance > 0.0) {
            return Err(Error::config("verify.step, verify.tolerance and verify.oracle_tolerance must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config(m) if !m.starts_with(&format!("{section}.")) => Error::Config(format!("{section}: {m}")),
        other => other,
    }
}

/// A resolved configuration plus where its values came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: Option<PathBuf>,
    pub overrides: Vec<String>,
}

/// Splits `section.key=value`; the value is read as a TOML value, falling
/// back to a bare string.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::config(format!("--set {spec:?}: expected key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::config(format!("--set {spec:?}: empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value, spec: &str) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::config(format!("--set {spec:?}: {p} is not a table")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Reads `path` (if any), applies `overrides` in order and validates.
/// Defaults < file < overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig> {
    let (text, label) = match path {
        Some(p) => (std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?, p.display().to_string()),
        None => (String::new(), "<defaults>".to_string()),
    };
    let config = parse_config(&text, &label, overrides)?;
    Ok(LoadedConfig { config, source: path.map(Path::to_path_buf), overrides: overrides.to_vec() })
}

/// As [`load_config`] on in-memory text; `label` names the source in errors.
pub fn parse_config(text: &str, label: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    // The typed parse carries line/column spans for syntax errors and unknown keys.
    toml::from_str::<ExperimentConfig>(text).map_err(|e| Error::config(format!("{label}: {e}")))?;
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(format!("{label}: {e}")))?;
    let mut set_keys = Vec::new();
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut table, &path, value, spec)?;
        set_keys.push(path.join("."));
    }
    let config = ExperimentConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| Error::config(format!("--set {}: {}", overrides.join(" "), e.message())))?;
    config.validate().map_err(|e| anchor(e, text, label, &set_keys))?;
    Ok(config)
}

/// Prefixes a validation error with where the offending key was set.
fn anchor(e: Error, text: &str, label: &str, set_keys: &[String]) -> Error {
    let Error::Config(msg) = e else { return e };
    for key in dotted_keys(&msg) {
        if set_keys.contains(&key) {
            return Error::Config(format!("--set {key}: {msg}"));
        }
        if let Some(line) = key_line(text, &key) {
            return Error::Config(format!("{label}:{line}: {msg}"));
        }
    }
    Error::Config(format!("{label}: {msg}"))
}

fn dotted_keys(msg: &str) -> Vec<String> {
    msg.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .filter(|w| w.contains('.') && w.split('.').all(|p| !p.is_empty() && !p.chars().all(|c| c.is_ascii_digit())))
        .map(str::to_string)
        .collect()
}

/// 1-based line where `key` (dotted, e.g. `hyper.tau`) is assigned, or
/// failing that, where its section header sits.
pub fn key_line(text: &str, key: &str) -> Option<usize> {
    let mut section = String::new();
    let mut header_line = None;
    let section_of_key = key.rsplit_once('.').map_or("", |(s, _)| s);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.trim().to_string();
            if section == section_of_key && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            let k: String = k.split('.').map(str::trim).collect::<Vec<_>>().join(".");
            let full = if section.is_empty() { k } else { format!("{section}.{k}") };
            if full == key || key.starts_with(&format!("{full}.")) {
                return Some(i + 1);
            }
        }
    }
    header_line
}
