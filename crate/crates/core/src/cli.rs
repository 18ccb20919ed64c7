//! Command-line driver. Every subcommand resolves a config, writes
//! `config.toml` (the resolved snapshot) and `manifest.txt` into its run
//! directory, then its own artifacts.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analytics::{
    compute_variances, export_embeddings, finetune_classifier, grouped_clip_features, per_class_csv,
    per_class_improvement, retrieval_eval, theta_sweep, theta_sweep_csv, weighted_delta, ClassificationReport,
};
use crate::binio::KeyValues;
use crate::config::{load_config, ExperimentConfig, LoadedConfig};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::synthetic::{generate_dataset, load_dataset, save_dataset, split_train_test, Dataset};
use crate::trainers::pretrain;
use crate::verify::{gradcheck_csv, gradcheck_suites, oracle_csv, oracle_suites};

pub const OUT_ROOT_ENV: &str = "DUALREP_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "dualrep", version, about = "Dual-representation self-supervised learning on synthetic videos")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config; omitted sections and keys take defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory (default: <output root>/<subcommand>).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// `section.key=value` override, applied after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Root for run directories when neither --out nor out_dir is given.
    #[arg(long, global = true, env = OUT_ROOT_ENV, default_value = "runs", value_name = "DIR")]
    pub out_root: PathBuf,
}

impl Cli {
    /// `try_parse_from`, keeping every `--set` in command-line order. Clap
    /// drops the occurrences before the subcommand when some follow it.
    pub fn parse_args<I, T>(args: I) -> std::result::Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
        let mut cli = Self::try_parse_from(&args)?;
        let mut sets = Vec::new();
        let mut rest = args.iter().skip(1).map(|a| a.to_string_lossy());
        while let Some(a) = rest.next() {
            if a == "--" {
                break;
            } else if a == "--set" {
                sets.extend(rest.next().map(|v| v.into_owned()));
            } else if let Some(v) = a.strip_prefix("--set=") {
                sets.push(v.to_string());
            }
        }
        cli.set = sets;
        Ok(cli)
    }
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and save it under <run>/data.
    GenerateData,
    /// Self-supervised pretraining; writes metrics.csv and checkpoints.
    Pretrain,
    /// Supervised finetuning of a checkpoint (or a random encoder).
    Finetune {
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        /// Also finetune a random-init encoder and write per-class deltas.
        #[arg(long)]
        baseline: bool,
    },
    /// Nearest-neighbour retrieval of test videos against training videos.
    Retrieve {
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Inter/intra-video feature variance of all videos.
    AnalyzeVariance {
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
    },
    /// Pretrain and evaluate once per ranking temperature in sweep.thetas.
    SweepTheta,
    /// Finite-difference checks of every loss through the encoder.
    Gradcheck,
    /// Every loss against a term-by-term reference implementation.
    OracleCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenerateData => "generate-data",
            Command::Pretrain => "pretrain",
            Command::Finetune { .. } => "finetune",
            Command::Retrieve { .. } => "retrieve",
            Command::AnalyzeVariance { .. } => "analyze-variance",
            Command::SweepTheta => "sweep-theta",
            Command::Gradcheck => "gradcheck",
            Command::OracleCheck => "oracle-check",
        }
    }

    fn checkpoint(&self) -> Option<&Path> {
        match self {
            Command::Finetune { checkpoint, .. }
            | Command::Retrieve { checkpoint }
            | Command::AnalyzeVariance { checkpoint } => checkpoint.as_deref(),
            _ => None,
        }
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    /// Human-readable result lines.
    pub report: Vec<String>,
    /// A verification suite ran to completion but did not pass.
    pub failed: bool,
}

pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;
pub const EXIT_OTHER: i32 = 4;

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            for line in &out.report {
                println!("{line}");
            }
            println!("run directory: {}", out.out_dir.display());
            if out.failed {
                EXIT_FAILED_CHECK
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::NonFinite { .. } | Error::NotFinite(_) => EXIT_NON_FINITE,
                _ => EXIT_OTHER,
            }
        }
    }
}

/// Resolves the config for `cli`: defaults < file < `--set` < dedicated flags.
pub fn resolve_config(cli: &Cli) -> Result<LoadedConfig> {
    let mut sets = cli.set.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    if let Some(w) = cli.workers {
        sets.push(format!("workers={w}"));
    }
    if let Some(c) = cli.command.checkpoint() {
        sets.push(format!("eval.checkpoint={}", toml_string(&c.display().to_string())));
    }
    load_config(cli.config.as_deref(), &sets)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn run(cli: &Cli) -> Result<RunOutcome> {
    let loaded = resolve_config(cli)?;
    let cfg = &loaded.config;
    let name = cli.command.name();
    let out_dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| cli.out_root.join(name));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut outcome = RunOutcome { out_dir: out_dir.clone(), artifacts: Vec::new(), report: Vec::new(), failed: false };
    write_text(&out_dir, "config.toml", &snapshot(cfg)?, &mut outcome)?;
    let result = pool.install(|| dispatch(&cli.command, cfg, &out_dir, &mut outcome));
    write_manifest(&loaded, name, &out_dir, &mut outcome, result.as_ref().err())?;
    result.map(|_| outcome)
}

fn snapshot(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = None;
    Ok(format!("# resolved configuration; rerun with --config pointing here\n{}", c.to_toml()?))
}

fn write_manifest(
    loaded: &LoadedConfig,
    name: &str,
    out_dir: &Path,
    outcome: &mut RunOutcome,
    err: Option<&Error>,
) -> Result<()> {
    let mut kv = KeyValues::default();
    kv.push("format", "dualrep-run-v1");
    kv.push("subcommand", name);
    kv.push("version", env!("CARGO_PKG_VERSION"));
    kv.push("seed", loaded.config.seed);
    kv.push("config", "config.toml");
    kv.push("config_source", loaded.source.as_ref().map_or("<defaults>".into(), |p| p.display().to_string()));
    kv.push("overrides", loaded.overrides.join(" "));
    kv.push(
        "status",
        if err.is_some() {
            "error"
        } else if outcome.failed {
            "failed"
        } else {
            "ok"
        },
    );
    kv.push("artifacts", outcome.artifacts.join(","));
    let path = out_dir.join("manifest.txt");
    fs::write(&path, kv.render("dualrep run manifest")).map_err(|e| Error::io(&path, e))
}

fn write_text(dir: &Path, file: &str, text: &str, outcome: &mut RunOutcome) -> Result<()> {
    let path = dir.join(file);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    outcome.artifacts.push(file.to_string());
    Ok(())
}

fn dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = match &cfg.dataset_dir {
        Some(dir) => load_dataset(dir)?,
        None => generate_dataset(&cfg.data)?,
    };
    if ds.spec.frame_dim != cfg.encoder.frame_dim {
        return Err(Error::config(format!(
            "dataset frame_dim {} does not match encoder.frame_dim {}",
            ds.spec.frame_dim, cfg.encoder.frame_dim
        )));
    }
    cfg.clip.validate(ds.spec.frames_per_video)?;
    Ok(ds)
}

/// The checkpointed query encoder, or a fresh one seeded by `cfg.seed`.
fn encoder(cfg: &ExperimentConfig) -> Result<(EncoderParams, String)> {
    match &cfg.eval.checkpoint {
        Some(dir) => {
            let p = EncoderParams::load(dir, "query")?;
            if p.arch.frame_dim != cfg.encoder.frame_dim {
                return Err(Error::config(format!(
                    "checkpoint frame_dim {} does not match encoder.frame_dim {}",
                    p.arch.frame_dim, cfg.encoder.frame_dim
                )));
            }
            Ok((p, dir.display().to_string()))
        }
        None => Ok((EncoderParams::init(cfg.encoder, cfg.seed)?, "random-init".into())),
    }
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, out: &Path, o: &mut RunOutcome) -> Result<()> {
    match cmd {
        Command::GenerateData => {
            let ds = dataset(cfg)?;
            save_dataset(&ds, &out.join("data"))?;
            o.artifacts.push("data".into());
            o.report.push(format!("{} videos in {} classes", ds.videos.len(), ds.spec.num_classes));
        }
        Command::Pretrain => {
            let ds = dataset(cfg)?;
            let (train, _) = split_train_test(&ds, cfg.eval.train_fraction)?;
            let run = pretrain(&cfg.pretrain_setup(), &ds, &train, Some(out)).map_err(|e| match e {
                Error::NonFinite { step, detail } => {
                    o.artifacts.extend(["metrics.csv".into(), "nan_dump".into()]);
                    let dump = out.join("nan_dump");
                    Error::NonFinite { step, detail: format!("{detail}; diagnostics in {}", dump.display()) }
                }
                other => other,
            })?;
            o.artifacts.extend(["metrics.csv".into(), "checkpoint".into()]);
            if cfg.train.checkpoint_every > 0 {
                o.artifacts.push("checkpoints".into());
            }
            write_text(
                out,
                "embeddings.tsv",
                &export_embeddings(&run.state.query, &ds, &cfg.clip, cfg.eval.clips)?,
                o,
            )?;
            if let (Some(first), Some(last)) = (run.metrics.first(), run.metrics.last()) {
                o.report.push(format!(
                    "{} steps, L_total {:.6} -> {:.6}",
                    run.metrics.len(),
                    first.losses.l_total,
                    last.losses.l_total
                ));
            }
        }
        Command::Finetune { baseline, .. } => {
            let ds = dataset(cfg)?;
            let (train, test) = split_train_test(&ds, cfg.eval.train_fraction)?;
            let (params, source) = encoder(cfg)?;
            let ft = |p: &EncoderParams| {
                finetune_classifier(p, &ds, &train, &test, &cfg.clip, &cfg.augment, &cfg.finetune, cfg.seed)
            };
            let (_, _, rep) = ft(&params)?;
            write_text(out, "finetune.csv", &report_csv(&rep), o)?;
            write_text(out, "predictions.csv", &predictions_csv(&ds, &test, &rep), o)?;
            o.report.push(format!("finetune accuracy ({source}): {:.4}", rep.accuracy));
            if *baseline {
                let (_, _, base) = ft(&EncoderParams::init(cfg.encoder, cfg.seed)?)?;
                let rows = per_class_improvement(&base.per_class_accuracy, &rep.per_class_accuracy)?;
                write_text(out, "per_class.csv", &per_class_csv(&rows), o)?;
                let delta = weighted_delta(&rows, &rep.class_counts)?;
                o.report.push(format!("random-init accuracy: {:.4}, weighted delta {delta:+.4}", base.accuracy));
            }
        }
        Command::Retrieve { .. } => {
            let ds = dataset(cfg)?;
            let (train, test) = split_train_test(&ds, cfg.eval.train_fraction)?;
            let (params, source) = encoder(cfg)?;
            let r = retrieval_eval(&params, &ds, &train, &test, &cfg.clip, cfg.eval.clips, &cfg.eval.topk)?;
            let mut csv = String::from("k,accuracy\n");
            for (k, a) in r.k_list.iter().zip(&r.accuracy) {
                csv.push_str(&format!("{k},{a}\n"));
                o.report.push(format!("top-{k} ({source}): {a:.4}"));
            }
            write_text(out, "retrieval.csv", &csv, o)?;
        }
        Command::AnalyzeVariance { .. } => {
            let ds = dataset(cfg)?;
            let (params, source) = encoder(cfg)?;
            let ids: Vec<usize> = (0..ds.videos.len()).collect();
            let groups = grouped_clip_features(&params, &ds, &ids, &cfg.clip, cfg.eval.clips)?;
            let v = compute_variances(&groups)?;
            write_text(
                out,
                "variance.csv",
                &format!(
                    "sigma_inter,sigma_intra,discrimination\n{},{},{}\n",
                    v.sigma_inter, v.sigma_intra, v.discrimination
                ),
                o,
            )?;
            write_text(out, "embeddings.tsv", &export_embeddings(&params, &ds, &cfg.clip, cfg.eval.clips)?, o)?;
            o.report.push(format!(
                "{source}: sigma_inter {:.6}, sigma_intra {:.6}, discrimination {:.4}",
                v.sigma_inter, v.sigma_intra, v.discrimination
            ));
        }
        Command::SweepTheta => {
            let ds = dataset(cfg)?;
            let (train, test) = split_train_test(&ds, cfg.eval.train_fraction)?;
            let rows = theta_sweep(
                &cfg.pretrain_setup(),
                &ds,
                &train,
                &test,
                &cfg.sweep.thetas,
                &cfg.finetune,
                cfg.eval.clips,
            )?;
            write_text(out, "theta_sweep.csv", &theta_sweep_csv(&rows), o)?;
            for r in rows {
                o.report.push(format!(
                    "theta {}: retrieval top-1 {:.4}, finetune {:.4}",
                    r.theta, r.retrieval_top1, r.finetune_accuracy
                ));
            }
        }
        Command::Gradcheck => {
            let rows = gradcheck_suites(&cfg.verify, &cfg.hyper)?;
            write_text(out, "gradcheck.csv", &gradcheck_csv(&rows), o)?;
            let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            o.failed = rows.iter().any(|r| !r.passed);
            o.report.push(format!(
                "{} gradient checks, max relative error {worst:.3e} (tolerance {:e}): {}",
                rows.len(),
                cfg.verify.tolerance,
                if o.failed { "FAIL" } else { "ok" }
            ));
        }
        Command::OracleCheck => {
            let rows = oracle_suites(&cfg.verify, cfg.seed)?;
            write_text(out, "oracle.csv", &oracle_csv(&rows), o)?;
            o.failed = rows.iter().any(|r| !r.passed);
            for r in &rows {
                o.report.push(format!(
                    "{:<18} max |diff| {:.3e} over {} instances: {}",
                    r.suite,
                    r.max_abs_error,
                    r.instances,
                    if r.passed { "ok" } else { "FAIL" }
                ));
            }
        }
    }
    Ok(())
}

fn report_csv(rep: &ClassificationReport) -> String {
    let mut csv = String::from("class,count,accuracy\n");
    for (c, (n, a)) in rep.class_counts.iter().zip(&rep.per_class_accuracy).enumerate() {
        csv.push_str(&format!("{c},{n},{a}\n"));
    }
    csv.push_str(&format!("all,{},{}\n", rep.class_counts.iter().sum::<usize>(), rep.accuracy));
    csv
}

fn predictions_csv(ds: &Dataset, ids: &[usize], rep: &ClassificationReport) -> String {
    let mut csv = String::from("video_id,label,prediction\n");
    for (&i, p) in ids.iter().zip(&rep.predictions) {
        csv.push_str(&format!("{},{},{p}\n", ds.videos[i].id, ds.videos[i].class_label));
    }
    csv
}
