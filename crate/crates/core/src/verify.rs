//! Self-checks: central finite differences of every loss composed through
//! the encoder, and brute-force re-implementations of every loss that
//! enumerate terms one by one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::analytics::{compute_variances, VideoFeatures};
use crate::config::VerifyConfig;
use crate::encoder::{Architecture, DualRep, EncoderParams, Feature, Gradients};
use crate::error::Result;
use crate::losses::{
    clip_contrastive_moco, clip_contrastive_simclr, decomposition_check, order_prediction_batch, rank_loss_aug,
    rank_loss_total, rank_loss_unaug, tc_contrast_moco, tc_contrast_simclr, total_loss, Hyperparams,
};
use crate::synthetic::{factorial, generate_dataset, AugmentConfig, ClipSampling, VideoSpec};
use crate::trainers::{moco_gradients, sample_batch, simclr_gradients, BatchItem, LossTerm, LossWeights, Pretext};

/// Denominator floor of the per-coordinate relative error; coordinates
/// whose analytic and numeric values are both below it are compared
/// absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub suite: String,
    pub seed: u64,
    pub coords: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub suite: String,
    pub instances: usize,
    pub max_abs_error: f64,
    pub passed: bool,
}

pub fn gradcheck_csv(rows: &[GradcheckRow]) -> String {
    let mut out = String::from("suite,seed,coords,max_rel_error,passed\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:e},{}\n", r.suite, r.seed, r.coords, r.max_rel_error, r.passed));
    }
    out
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("suite,instances,max_abs_error,passed\n");
    for r in rows {
        out.push_str(&format!("{},{},{:e},{}\n", r.suite, r.instances, r.max_abs_error, r.passed));
    }
    out
}

/// `max_j |a_j - n_j| / max(|a_j|, |n_j|, REL_FLOOR)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)).fold(0.0, f64::max)
}

/// Central differences of `f` at every coordinate of `params`.
pub fn numeric_gradient(
    params: &EncoderParams,
    step: f64,
    mut f: impl FnMut(&EncoderParams) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut p = params.clone();
    (0..params.values.len())
        .map(|j| {
            let orig = p.values[j];
            p.values[j] = orig + step;
            let up = f(&p)?;
            p.values[j] = orig - step;
            let down = f(&p)?;
            p.values[j] = orig;
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Feature {
    loop {
        if let Ok(f) = Feature::normalized(&gaussian(rng, dim)) {
            return f;
        }
    }
}

fn dual(rng: &mut ChaCha8Rng, segments: usize, dim: usize) -> DualRep {
    DualRep::new((0..segments).map(|_| unit(rng, dim)).collect()).expect("equal part dims")
}

/// A tiny encoder, batch and MoCo dictionary for one gradient-check seed.
struct Fixture {
    query: EncoderParams,
    key: EncoderParams,
    clip_queue: Vec<Feature>,
    dual_queue: Vec<DualRep>,
    batch: Vec<BatchItem>,
}

fn fixture(seed: u64, batch_size: usize, pretext: Pretext) -> Result<Fixture> {
    let segments = 2;
    let order_classes = if pretext == Pretext::OrderPrediction { factorial(segments) } else { 0 };
    let arch = Architecture {
        frame_dim: 6,
        hidden_dim: 7,
        embed_dim: 6,
        proj_dim: 5,
        dual_hidden_dim: 5,
        segments,
        order_classes,
    };
    let spec = VideoSpec {
        num_classes: 2,
        videos_per_class: batch_size.div_ceil(2),
        frames_per_video: 16,
        frame_dim: arch.frame_dim,
        seed,
        ..VideoSpec::default()
    };
    let ds = generate_dataset(&spec)?;
    let videos: Vec<_> = ds.videos.iter().take(batch_size).collect();
    let sampling = ClipSampling { length: 4, stride: 2, segments };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = sample_batch(&videos, &sampling, &AugmentConfig::default(), pretext, &mut rng)?;
    let clip_queue = (0..8).map(|_| unit(&mut rng, arch.proj_dim)).collect();
    let dual_queue = (0..8).map(|_| dual(&mut rng, segments, arch.proj_dim)).collect();
    Ok(Fixture {
        query: EncoderParams::init(arch, seed)?,
        key: EncoderParams::init(arch, seed ^ 0x5eed)?,
        clip_queue,
        dual_queue,
        batch,
    })
}

/// The suites run by [`gradcheck_suites`]: framework, loss term, pretext.
pub const GRADCHECK_SUITES: [(&str, LossTerm, Pretext); 9] = [
    ("simclr/contrast", LossTerm::Contrast, Pretext::ShuffleRank),
    ("simclr/rank_unaug", LossTerm::RankUnaug, Pretext::ShuffleRank),
    ("simclr/rank_aug", LossTerm::RankAug, Pretext::ShuffleRank),
    ("simclr/tc", LossTerm::Tc, Pretext::ShuffleRank),
    ("simclr/order", LossTerm::Order, Pretext::OrderPrediction),
    ("moco/contrast", LossTerm::Contrast, Pretext::ShuffleRank),
    ("moco/rank_unaug", LossTerm::RankUnaug, Pretext::ShuffleRank),
    ("moco/rank_aug", LossTerm::RankAug, Pretext::ShuffleRank),
    ("moco/tc", LossTerm::Tc, Pretext::ShuffleRank),
];

fn objective(
    fx: &Fixture,
    params: &EncoderParams,
    moco: bool,
    hyper: &Hyperparams,
    pretext: Pretext,
    w: &LossWeights,
) -> Result<(f64, Gradients)> {
    if moco {
        let g = moco_gradients(params, &fx.key, &fx.clip_queue, &fx.dual_queue, hyper, &fx.batch, pretext, w)?;
        Ok((g.losses.l_total, g.query))
    } else {
        let (l, g) = simclr_gradients(params, hyper, &fx.batch, pretext, w)?;
        Ok((l.l_total, g))
    }
}

/// Analytic against numeric gradients of each loss term, with respect to
/// every encoder parameter, for seeds `0..cfg.seeds`.
pub fn gradcheck_suites(cfg: &VerifyConfig, hyper: &Hyperparams) -> Result<Vec<GradcheckRow>> {
    let mut rows = Vec::new();
    for (name, term, pretext) in GRADCHECK_SUITES {
        let moco = name.starts_with("moco");
        let w = LossWeights::only(term);
        for seed in 0..cfg.seeds as u64 {
            let fx = fixture(seed, cfg.batch_size, pretext)?;
            let (_, analytic) = objective(&fx, &fx.query, moco, hyper, pretext, &w)?;
            let numeric =
                numeric_gradient(&fx.query, cfg.step, |p| Ok(objective(&fx, p, moco, hyper, pretext, &w)?.0))?;
            let err = max_relative_error(&analytic.values, &numeric);
            rows.push(GradcheckRow {
                suite: name.to_string(),
                seed,
                coords: numeric.len(),
                max_rel_error: err,
                passed: err < cfg.tolerance,
            });
        }
    }
    Ok(rows)
}

fn dot(a: &Feature, b: &Feature) -> f64 {
    let mut s = 0.0;
    for i in 0..a.dim() {
        s += a.as_slice()[i] * b.as_slice()[i];
    }
    s
}

/// `-(1/M) sum_i ln( e^{s_i,i+/tau} / sum_{k != i} e^{s_ik/tau} )`, term by term.
pub fn naive_contrast_simclr(z: &[Feature], pairing: &[usize], tau: f64) -> f64 {
    let m = z.len();
    let mut total = 0.0;
    for i in 0..m {
        let mut denom = 0.0;
        for k in 0..m {
            if k != i {
                denom += (dot(&z[i], &z[k]) / tau).exp();
            }
        }
        let num = (dot(&z[i], &z[pairing[i]]) / tau).exp();
        total += -(num / denom).ln();
    }
    total / m as f64
}

/// `-(1/N) sum_i ln( e^{q_i.k_i/tau} / (e^{q_i.k_i/tau} + sum_j e^{q_i.d_j/tau}) )`.
pub fn naive_contrast_moco(q: &[Feature], k: &[Feature], queue: &[Feature], tau: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..q.len() {
        let pos = (dot(&q[i], &k[i]) / tau).exp();
        let mut neg = 0.0;
        for d in queue {
            neg += (dot(&q[i], d) / tau).exp();
        }
        total += -(pos / (pos + neg)).ln();
    }
    total / q.len() as f64
}

/// Mean of all `S^2` part dot products.
pub fn naive_tc_sim(a: &DualRep, b: &DualRep) -> f64 {
    let mut s = 0.0;
    for x in &a.parts {
        for y in &b.parts {
            s += dot(x, y);
        }
    }
    s / (a.segments() * b.segments()) as f64
}

pub fn naive_tc_simclr(r: &[DualRep], pairing: &[usize], tau: f64) -> f64 {
    let m = r.len();
    let mut total = 0.0;
    for i in 0..m {
        let mut denom = 0.0;
        for k in 0..m {
            if k != i {
                denom += (naive_tc_sim(&r[i], &r[k]) / tau).exp();
            }
        }
        total += -((naive_tc_sim(&r[i], &r[pairing[i]]) / tau).exp() / denom).ln();
    }
    total / m as f64
}

pub fn naive_tc_moco(r: &[DualRep], d: &[DualRep], queue: &[DualRep], tau: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..r.len() {
        let pos = (naive_tc_sim(&r[i], &d[i]) / tau).exp();
        let mut neg = 0.0;
        for k in queue {
            neg += (naive_tc_sim(&r[i], k) / tau).exp();
        }
        total += -(pos / (pos + neg)).ln();
    }
    total / r.len() as f64
}

/// Ranking loss of a clip against its shuffled counterpart, read straight
/// from the shuffled part order: shuffled part `j` holds segment `order[j]`.
/// For every anchor part `x` of either clip, the positive is the part of the
/// other clip with the same segment and the negatives are all parts of
/// other segments.
pub fn naive_rank(pairs: &[(DualRep, DualRep, Vec<usize>)], theta: f64) -> f64 {
    let mut total = 0.0;
    for (first, shuffled, order) in pairs {
        // (segment, feature) for all 2S parts.
        let mut parts: Vec<(usize, usize, &Feature)> = Vec::new();
        for (seg, f) in first.parts.iter().enumerate() {
            parts.push((0, seg, f));
        }
        for (j, f) in shuffled.parts.iter().enumerate() {
            parts.push((1, order[j], f));
        }
        for &(side_x, seg_x, x) in &parts {
            for &(side_y, seg_y, y) in &parts {
                if side_y == side_x || seg_y != seg_x {
                    continue;
                }
                for &(_, seg_z, z) in &parts {
                    if seg_z == seg_x {
                        continue;
                    }
                    total += (1.0 + ((dot(x, z) - dot(x, y)) / theta).exp()).ln();
                }
            }
        }
    }
    total
}

/// `-(1/N) sum_i ln softmax(logits_i)[target_i]`.
pub fn naive_order(logits: &[Vec<f64>], targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (l, &t) in logits.iter().zip(targets) {
        let denom: f64 = l.iter().map(|v| v.exp()).sum();
        total += -(l[t].exp() / denom).ln();
    }
    total / logits.len() as f64
}

/// Variances by explicit loops over videos, pairs and clips.
pub fn naive_variances(groups: &[Vec<Vec<f64>>]) -> (f64, f64) {
    let n = groups.len();
    let d = groups[0][0].len();
    let mut means = vec![vec![0.0; d]; n];
    for (k, g) in groups.iter().enumerate() {
        for z in g {
            for j in 0..d {
                means[k][j] += z[j] / g.len() as f64;
            }
        }
    }
    let mut intra = 0.0;
    for (k, g) in groups.iter().enumerate() {
        let mut s = 0.0;
        for z in g {
            for j in 0..d {
                s += (z[j] - means[k][j]).powi(2);
            }
        }
        intra += s / g.len() as f64;
    }
    let mut inter = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                for (x, y) in means[a].iter().zip(&means[b]) {
                    inter += (x - y).powi(2);
                }
            }
        }
    }
    // Ordered pairs count each unordered pair twice.
    (inter / (2.0 * (n * (n - 1)) as f64), intra / n as f64)
}

fn random_involution(rng: &mut ChaCha8Rng, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
    let mut pairing = vec![0; m];
    for p in idx.chunks(2) {
        pairing[p[0]] = p[1];
        pairing[p[1]] = p[0];
    }
    pairing
}

fn random_order(rng: &mut ChaCha8Rng, s: usize) -> Vec<usize> {
    loop {
        let mut o: Vec<usize> = (0..s).collect();
        rand::seq::SliceRandom::shuffle(o.as_mut_slice(), rng);
        if o.iter().enumerate().any(|(i, &v)| i != v) {
            return o;
        }
    }
}

struct Tracker {
    rows: Vec<OracleRow>,
    tol: f64,
    instances: usize,
}

impl Tracker {
    fn suite(&mut self, name: &str, tol: f64, mut one: impl FnMut(usize) -> Result<f64>) -> Result<()> {
        let mut worst = 0.0f64;
        for i in 0..self.instances {
            worst = worst.max(one(i)?);
        }
        let tol = tol.min(self.tol);
        self.rows.push(OracleRow {
            suite: name.to_string(),
            instances: self.instances,
            max_abs_error: worst,
            passed: worst < tol,
        });
        Ok(())
    }
}

/// Each loss against its term-enumerating counterpart above, plus the
/// alignment/uniformity identity and the variance double loops, on
/// `cfg.instances` random small inputs per suite.
pub fn oracle_suites(cfg: &VerifyConfig, seed: u64) -> Result<Vec<OracleRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tracker { rows: Vec::new(), tol: cfg.oracle_tolerance, instances: cfg.instances };
    let taus = [0.07, 0.5, 1.0];
    let rng = &mut rng;

    t.suite("contrast_simclr", 1.0, |i| {
        let m = 2 * rng.random_range(1..=5);
        let d = rng.random_range(2..=6);
        let z: Vec<Feature> = (0..m).map(|_| unit(rng, d)).collect();
        let pairing = random_involution(rng, m);
        let tau = taus[i % 3];
        Ok((clip_contrastive_simclr(&z, &pairing, tau)?.value - naive_contrast_simclr(&z, &pairing, tau)).abs())
    })?;
    t.suite("contrast_moco", 1.0, |i| {
        let (n, k, d) = (rng.random_range(1..=5), rng.random_range(1..=12), rng.random_range(2..=6));
        let q: Vec<Feature> = (0..n).map(|_| unit(rng, d)).collect();
        let kp: Vec<Feature> = (0..n).map(|_| unit(rng, d)).collect();
        let queue: Vec<Feature> = (0..k).map(|_| unit(rng, d)).collect();
        let tau = taus[i % 3];
        Ok((clip_contrastive_moco(&q, &kp, &queue, tau)?.value - naive_contrast_moco(&q, &kp, &queue, tau)).abs())
    })?;
    for (name, aug) in [("rank_unaug", false), ("rank_aug", true)] {
        t.suite(name, 1.0, |i| {
            let (n, s, d) = (rng.random_range(1..=4), 2 + i % 3, rng.random_range(2..=6));
            let theta = [0.05, 0.5, 1.0][i % 3];
            let raw: Vec<(DualRep, DualRep, Vec<usize>)> = (0..n)
                .map(|_| {
                    let order = random_order(rng, s);
                    (dual(rng, s, d), dual(rng, s, d), order)
                })
                .collect();
            let canonical = raw.iter().map(|(a, b, o)| Ok((a.clone(), b.unpermute(o)?))).collect::<Result<Vec<_>>>()?;
            let lib = if aug { rank_loss_aug(&canonical, theta)? } else { rank_loss_unaug(&canonical, theta)? };
            Ok((lib.value - naive_rank(&raw, theta)).abs())
        })?;
    }
    t.suite("tc_sim", 1.0, |i| {
        let (s, d) = (1 + i % 4, rng.random_range(2..=6));
        let (a, b) = (dual(rng, s, d), dual(rng, s, d));
        Ok((crate::losses::tc_sim(&a, &b)? - naive_tc_sim(&a, &b)).abs())
    })?;
    t.suite("tc_simclr", 1.0, |i| {
        let (m, s, d) = (2 * rng.random_range(1..=4), 2 + i % 2, rng.random_range(2..=6));
        let r: Vec<DualRep> = (0..m).map(|_| dual(rng, s, d)).collect();
        let pairing = random_involution(rng, m);
        let tau = taus[i % 3];
        Ok((tc_contrast_simclr(&r, &pairing, tau)?.value - naive_tc_simclr(&r, &pairing, tau)).abs())
    })?;
    t.suite("tc_moco", 1.0, |i| {
        let (n, k, s, d) = (rng.random_range(1..=4), rng.random_range(1..=10), 2 + i % 2, rng.random_range(2..=6));
        let r: Vec<DualRep> = (0..n).map(|_| dual(rng, s, d)).collect();
        let dp: Vec<DualRep> = (0..n).map(|_| dual(rng, s, d)).collect();
        let queue: Vec<DualRep> = (0..k).map(|_| dual(rng, s, d)).collect();
        let tau = taus[i % 3];
        Ok((tc_contrast_moco(&r, &dp, &queue, tau)?.value - naive_tc_moco(&r, &dp, &queue, tau)).abs())
    })?;
    t.suite("order_prediction", 1.0, |i| {
        let (n, c) = (rng.random_range(1..=6), factorial(2 + i % 3));
        let logits: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, c).iter().map(|v| 3.0 * v).collect()).collect();
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        Ok((order_prediction_batch(&logits, &targets)?.value - naive_order(&logits, &targets)).abs())
    })?;
    t.suite("total_objective", 1.0, |_| {
        let parts: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
        let (l_c, unaug, aug, l_tc) = (parts[0], parts[1], parts[2], parts[3]);
        let (l1, l2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let naive = l_c + l1 * (0.5 * unaug + 0.5 * aug) + l2 * l_tc;
        Ok((total_loss(l_c, rank_loss_total(unaug, aug), l_tc, l1, l2) - naive).abs())
    })?;
    t.suite("decomposition", 1.0, |i| {
        let m = 2 * rng.random_range(1..=5);
        let d = rng.random_range(2..=6);
        let z: Vec<Feature> = (0..m).map(|_| unit(rng, d)).collect();
        let pairing = random_involution(rng, m);
        Ok(decomposition_check(&z, &pairing, [1.0, 0.07][i % 2])?.residual)
    })?;
    t.suite("variance", 1e-12, |_| {
        let (n, d) = (rng.random_range(2..=6), rng.random_range(1..=5));
        let groups: Vec<Vec<Vec<f64>>> =
            (0..n).map(|_| (0..rng.random_range(1..=5)).map(|_| gaussian(rng, d)).collect()).collect();
        let feats: Vec<VideoFeatures> =
            groups.iter().enumerate().map(|(video_id, g)| VideoFeatures { video_id, features: g.clone() }).collect();
        let rep = compute_variances(&feats)?;
        let (inter, intra) = naive_variances(&groups);
        Ok((rep.sigma_inter - inter).abs().max((rep.sigma_intra - intra).abs()))
    })?;
    Ok(t.rows)
}
