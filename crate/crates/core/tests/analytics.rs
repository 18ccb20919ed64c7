use dualrep::analytics::{finetune_classifier, retrieval_topk, theta_sweep, FinetuneConfig};
use dualrep::config::{parse_config, ExperimentConfig};
use dualrep::encoder::EncoderParams;
use dualrep::synthetic::{generate_dataset, split_train_test};
use dualrep::trainers::pretrain;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const DESK: &str = include_str!("../../../configs/desk.toml");

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

#[test]
fn shuffled_labels_give_chance_retrieval() {
    let mut top1 = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gallery = unit_rows(&mut rng, 200, 16);
        let queries = unit_rows(&mut rng, 200, 16);
        let mut gallery_labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
        let mut query_labels = gallery_labels.clone();
        gallery_labels.shuffle(&mut rng);
        query_labels.shuffle(&mut rng);
        let r = retrieval_topk(&queries, &query_labels, &gallery, &gallery_labels, &[1]).unwrap();
        top1.push(r.accuracy[0]);
    }
    let mean = top1.iter().sum::<f64>() / top1.len() as f64;
    assert!((mean - 0.25).abs() <= 0.05, "mean top-1 {mean} over {top1:?}");
}

#[test]
fn untrained_head_is_at_chance() {
    let cfg = ExperimentConfig::default();
    let ft = FinetuneConfig { epochs: 0, ..FinetuneConfig::default() };
    let mut acc = Vec::new();
    for seed in 0..10 {
        let mut spec = cfg.data.clone();
        spec.seed = seed;
        let ds = generate_dataset(&spec).unwrap();
        let (train, test) = split_train_test(&ds, 0.5).unwrap();
        let p = EncoderParams::init(cfg.encoder, seed).unwrap();
        let (_, _, report) = finetune_classifier(&p, &ds, &train, &test, &cfg.clip, &cfg.augment, &ft, seed).unwrap();
        acc.push(report.accuracy);
    }
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    assert!((mean - 0.25).abs() <= 0.1, "mean accuracy {mean} over {acc:?}");
}

#[test]
fn pretraining_helps_finetuning_on_an_equal_budget() {
    // A short finetuning budget, where the starting point still matters.
    let base = parse_config(DESK, "desk", &["finetune.epochs=5".into()]).unwrap();
    for seed in 0..5 {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.data.seed = seed;
        let ds = generate_dataset(&cfg.data).unwrap();
        let (train, test) = split_train_test(&ds, cfg.eval.train_fraction).unwrap();
        let run = pretrain(&cfg.pretrain_setup(), &ds, &train, None).unwrap();
        let init = EncoderParams::init(cfg.encoder, seed).unwrap();
        let tune = |p: &EncoderParams| {
            finetune_classifier(p, &ds, &train, &test, &cfg.clip, &cfg.augment, &cfg.finetune, seed).unwrap().2.accuracy
        };
        let (pre, scratch) = (tune(&run.state.query), tune(&init));
        assert!(pre >= scratch, "seed {seed}: pretrained {pre} < random-init {scratch}");
    }
}

fn small_sweep(thetas: &[f64]) -> Vec<dualrep::analytics::ThetaRow> {
    let mut cfg = ExperimentConfig::default();
    cfg.data.videos_per_class = 6;
    cfg.train.epochs = 2;
    cfg.finetune.epochs = 1;
    let ds = generate_dataset(&cfg.data).unwrap();
    let (train, test) = split_train_test(&ds, 0.5).unwrap();
    theta_sweep(&cfg.pretrain_setup(), &ds, &train, &test, thetas, &cfg.finetune, 2).unwrap()
}

#[test]
fn sweep_gives_one_row_per_theta() {
    let rows = small_sweep(&[0.1]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].theta, 0.1);
}

#[test]
fn repeated_theta_repeats_the_row() {
    let rows = small_sweep(&[0.1, 0.1]);
    assert_eq!(rows[0], rows[1]);
}
