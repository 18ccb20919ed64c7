use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_dualrep");
const SMALL: [&str; 6] = ["--set", "data.videos_per_class=6", "--set", "train.epochs=2", "--set", "eval.clips=2"];

fn dualrep(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN).args(args).current_dir(cwd).env_remove("DUALREP_OUT_ROOT").output().unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(SMALL);
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_is_a_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "seed = 1\n\n[hyper]\nlambda9 = 2.0\n").unwrap();
    let out = dualrep(&["--config", "bad.toml", "pretrain"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("lambda9") && err.contains("line 4"), "{err}");
}

#[test]
fn invalid_value_is_reported_against_its_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[hyper]\ntau = 0.1\ntheta = -1.0\n").unwrap();
    let out = dualrep(&["--config", "bad.toml", "pretrain"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.toml:3:"), "{}", stderr(&out));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualrep(&["gradcheck", "--set", "verify.seeds"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = dualrep(&["gradcheck", "--set", "verify.nope=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn gradcheck_and_oracle_check_pass_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["gradcheck", "oracle-check"] {
        let out = dualrep(&[cmd, "--out", cmd], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
        let csv = fs::read_to_string(dir.path().join(cmd).join(format!("{}.csv", cmd.replace("-check", "")))).unwrap();
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")), "{csv}");
    }
}

#[test]
fn failing_check_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualrep(&["gradcheck", "--set", "verify.tolerance=1e-300", "--set", "verify.seeds=1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let manifest = fs::read_to_string(dir.path().join("runs/gradcheck/manifest.txt")).unwrap();
    assert!(manifest.contains("status = failed"), "{manifest}");
}

#[test]
fn pretrain_is_reproducible_and_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    for (name, workers) in [("a", "1"), ("b", "1"), ("c", "3")] {
        let out = dualrep(&with_small(&["pretrain", "--out", name, "--workers", workers]), dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let read = |n: &str, f: &str| fs::read(dir.path().join(n).join(f)).unwrap();
    for file in ["metrics.csv", "embeddings.tsv", "checkpoint/query.bin"] {
        assert_eq!(read("a", file), read("b", file), "{file}");
        assert_eq!(read("a", file), read("c", file), "{file} with 3 workers");
    }
}

#[test]
fn flags_beat_overrides_beat_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 1\n[hyper]\ntau = 0.2\ntheta = 0.3\n").unwrap();
    let args = [
        "--config",
        "c.toml",
        "--set",
        "seed=2",
        "--set",
        "hyper.tau=0.5",
        "--seed",
        "3",
        "gradcheck",
        "--set",
        "verify.seeds=1",
    ];
    let out = dualrep(&args, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let snap = fs::read_to_string(dir.path().join("runs/gradcheck/config.toml")).unwrap();
    let snap: toml::Table = toml::from_str(&snap).unwrap();
    assert_eq!(snap["seed"].as_integer(), Some(3));
    assert_eq!(snap["hyper"]["tau"].as_float(), Some(0.5));
    assert_eq!(snap["hyper"]["theta"].as_float(), Some(0.3));
    assert_eq!(snap["hyper"]["lambda1"].as_float(), Some(1.0));
}

#[test]
fn environment_sets_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["oracle-check", "--set", "verify.instances=2"])
        .current_dir(dir.path())
        .env("DUALREP_OUT_ROOT", "elsewhere")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("elsewhere/oracle-check/oracle.csv").is_file());
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn snapshot_reruns_the_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualrep(&with_small(&["pretrain", "--out", "first", "--seed", "5"]), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("first/manifest.txt")).unwrap();
    for entry in ["subcommand = pretrain", "seed = 5", "status = ok", "config = config.toml"] {
        assert!(manifest.contains(entry), "{entry} missing from\n{manifest}");
    }
    let out = dualrep(&["pretrain", "--config", "first/config.toml", "--out", "second"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(dir.path().join("first/metrics.csv")).unwrap(),
        fs::read(dir.path().join("second/metrics.csv")).unwrap()
    );
}

#[test]
fn evaluation_subcommands_read_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dualrep(&with_small(&["pretrain", "--out", "pre"]), dir.path()).status.success());
    let ckpt = "pre/checkpoint";
    let runs: [(&[&str], &str); 3] = [
        (&["finetune", "--checkpoint", ckpt, "--baseline", "--set", "finetune.epochs=1"], "per_class.csv"),
        (&["retrieve", "--checkpoint", ckpt], "retrieval.csv"),
        (&["analyze-variance", "--checkpoint", ckpt], "variance.csv"),
    ];
    for (args, artifact) in runs {
        let out = dualrep(&with_small(args), dir.path());
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        assert!(dir.path().join("runs").join(args[0]).join(artifact).is_file(), "{artifact}");
    }
    let out = dualrep(&["retrieve", "--checkpoint", "missing"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn generated_data_can_be_trained_on() {
    let dir = tempfile::tempdir().unwrap();
    assert!(dualrep(&with_small(&["generate-data", "--out", "gen"]), dir.path()).status.success());
    let out = dualrep(&with_small(&["pretrain", "--set", "dataset_dir=\"gen/data\"", "--out", "a"]), dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dualrep(&with_small(&["pretrain", "--out", "b"]), dir.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("a/metrics.csv")).unwrap(),
        fs::read(dir.path().join("b/metrics.csv")).unwrap()
    );
}

#[test]
fn non_finite_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dualrep(&with_small(&["pretrain", "--set", "train.optim.lr=1e300", "--out", "nan"]), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("nan_dump"));
    assert!(dir.path().join("nan/nan_dump/diagnostic.txt").is_file());
    let manifest = fs::read_to_string(dir.path().join("nan/manifest.txt")).unwrap();
    assert!(manifest.contains("status = error"));
}
