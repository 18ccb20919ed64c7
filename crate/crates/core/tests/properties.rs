use std::collections::VecDeque;

use dualrep::analytics::{compute_variances, per_class_improvement, retrieval_topk, weighted_delta, VideoFeatures};
use dualrep::config::parse_config;
use dualrep::encoder::{Architecture, DualRep, EncoderParams, Feature};
use dualrep::losses::{
    clip_contrastive_moco, clip_contrastive_simclr, decomposition_check, rank_loss_unaug, rank_term,
    tc_contrast_simclr, tc_sim,
};
use dualrep::synthetic::{
    augment_with, concat_subclips, generate_dataset, make_training_tuple, sample_clip, shuffle_subclips,
    split_subclips, unshuffle_subclips, AugmentConfig, AugmentParams, Clip, ClipSampling, Permutation, Video,
    VideoSpec,
};
use dualrep::trainers::NegativeQueue;
use dualrep::verify::naive_variances;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_vec(dim: usize) -> impl Strategy<Value = Feature> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| Feature::normalized(&v).unwrap())
}

fn dual_rep(segments: usize, dim: usize) -> impl Strategy<Value = DualRep> {
    prop::collection::vec(unit_vec(dim), segments).prop_map(|p| DualRep::new(p).unwrap())
}

fn clip(len: usize, dim: usize) -> impl Strategy<Value = Clip> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), len).prop_map(|frames| Clip {
        video_id: 7,
        start_frame: 0,
        stride: 1,
        frames,
    })
}

fn interleaved(m: usize) -> Vec<usize> {
    (0..m).map(|i| i ^ 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_then_concat_is_identity(segs in 1usize..=4, per in 1usize..=3, dim in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Clip {
            video_id: 0,
            start_frame: 0,
            stride: 1,
            frames: (0..segs * per).map(|_| (0..dim).map(|_| rand::Rng::random::<f64>(&mut rng)).collect()).collect(),
        };
        let parts = split_subclips(&c, segs).unwrap();
        prop_assert_eq!(parts.len(), segs);
        prop_assert!(parts.iter().all(|p| p.len() == per));
        prop_assert_eq!(concat_subclips(&parts).unwrap().frames, c.frames);
    }

    #[test]
    fn two_segment_shuffle_is_an_involution(c in clip(8, 3), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (once, p) = shuffle_subclips(&c, 2, &mut rng).unwrap();
        prop_assert_eq!(&p.0, &vec![1, 0]);
        let (twice, _) = shuffle_subclips(&once, 2, &mut rng).unwrap();
        prop_assert_eq!(twice.frames, c.frames);
    }

    #[test]
    fn shuffle_never_identity_and_inverts(segs in 3usize..=4, c in clip(12, 2), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, p) = shuffle_subclips(&c, segs, &mut rng).unwrap();
        prop_assert!(!p.is_identity());
        prop_assert_eq!(unshuffle_subclips(&s, &p).unwrap().frames, c.frames);
    }

    #[test]
    fn permutation_rank_roundtrip(n in 1usize..=5, seed in any::<u64>()) {
        let total: usize = (1..=n).product();
        let idx = (seed as usize) % total;
        let p = Permutation::from_index(n, idx);
        prop_assert_eq!(p.index(), idx);
        prop_assert_eq!(p.inverse().inverse(), p);
    }

    #[test]
    fn augmentation_is_temporally_consistent(c in clip(6, 5), seed in any::<u64>(), jitter in 0.0f64..2.0) {
        let cfg = AugmentConfig { jitter_scale: jitter, channel_scale_range: (0.5, 1.5), crop_fraction: 0.6 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = AugmentParams::draw(&cfg, 5, &mut rng).unwrap();
        let out = augment_with(&c, &params).unwrap();
        for (f, g) in c.frames.iter().zip(&out.frames) {
            prop_assert_eq!(&params.apply_frame(f), g);
        }
        // Pure jitter: the per-frame offset is the same vector on every frame.
        let shift = AugmentParams { gain: vec![1.0; 5], window_start: 0, window_len: 5, ..params };
        let out = augment_with(&c, &shift).unwrap();
        for (f, g) in c.frames.iter().zip(&out.frames) {
            for d in 0..5 {
                prop_assert!((g[d] - f[d] - shift.jitter[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn training_tuple_shares_one_augmentation(seed in any::<u64>()) {
        let video = Video { id: 2, class_label: 0, frames: (0..32).map(|t| vec![t as f64, -(t as f64), 1.0]).collect() };
        let sampling = ClipSampling::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = make_training_tuple(&video, &sampling, &AugmentConfig::default(), &mut rng).unwrap();
        prop_assert_eq!(&augment_with(&t.clip, &t.augment).unwrap().frames, &t.augmented.frames);
        prop_assert_eq!(unshuffle_subclips(&t.shuffled, &t.permutation).unwrap().frames, t.augmented.frames);
    }

    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let spec = VideoSpec { videos_per_class: 2, frame_dim: 4, seed, ..VideoSpec::default() };
        let a = generate_dataset(&spec).unwrap();
        prop_assert_eq!(&a.videos, &generate_dataset(&spec).unwrap().videos);
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(sample_clip(&a.videos[0], 8, 2, &mut r1).unwrap(), sample_clip(&a.videos[0], 8, 2, &mut r2).unwrap());
    }

    #[test]
    fn static_videos_have_zero_intra_variance(seed in any::<u64>()) {
        let spec = VideoSpec { videos_per_class: 2, frame_dim: 4, drift_scale: 0.0, noise_scale: 0.0, seed, ..VideoSpec::default() };
        let ds = generate_dataset(&spec).unwrap();
        for v in &ds.videos {
            prop_assert!(v.frames.iter().all(|f| f == &v.frames[0]));
        }
        let p = EncoderParams::init(Architecture { frame_dim: 4, ..Architecture::default() }, seed).unwrap();
        let ids: Vec<usize> = (0..ds.videos.len()).collect();
        let g = dualrep::analytics::grouped_clip_features(&p, &ds, &ids, &ClipSampling::default(), 5).unwrap();
        prop_assert_eq!(compute_variances(&g).unwrap().sigma_intra, 0.0);
    }

    #[test]
    fn rank_term_is_log2_at_tie(s in -1.0f64..1.0, theta in 1e-3f64..10.0) {
        prop_assert!((rank_term(s, s, theta).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rank_loss_positive_and_swap_symmetric(a in dual_rep(2, 4), b in dual_rep(2, 4), theta in 0.01f64..2.0) {
        let ab = rank_loss_unaug(&[(a.clone(), b.clone())], theta).unwrap().value;
        let ba = rank_loss_unaug(&[(b, a)], theta).unwrap().value;
        prop_assert!(ab > 0.0);
        prop_assert!((ab - ba).abs() < 1e-12 * ab.max(1.0));
    }

    #[test]
    fn tc_sim_is_dot_of_part_means(a in dual_rep(3, 4), b in dual_rep(3, 4)) {
        let mean = |r: &DualRep| (0..4).map(|d| r.parts.iter().map(|p| p.as_slice()[d]).sum::<f64>() / 3.0).collect::<Vec<_>>();
        let (ma, mb) = (mean(&a), mean(&b));
        let direct: f64 = ma.iter().zip(&mb).map(|(x, y)| x * y).sum();
        prop_assert!((tc_sim(&a, &b).unwrap() - direct).abs() < 1e-12);
        prop_assert!((tc_sim(&a, &b).unwrap() - tc_sim(&b, &a).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn in_batch_contrast_is_label_free(z in prop::collection::vec(unit_vec(3), 6), seed in any::<u64>(), tau in 0.05f64..2.0) {
        let pairing = interleaved(6);
        let base = clip_contrastive_simclr(&z, &pairing, tau).unwrap().value;
        prop_assert!(base >= 0.0);
        // Relabel items by a random permutation; the loss is unchanged.
        let mut perm: Vec<usize> = (0..6).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let mut inv = [0; 6];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let z2: Vec<Feature> = perm.iter().map(|&o| z[o].clone()).collect();
        let p2: Vec<usize> = perm.iter().map(|&o| inv[pairing[o]]).collect();
        let relabeled = clip_contrastive_simclr(&z2, &p2, tau).unwrap().value;
        prop_assert!((base - relabeled).abs() < 1e-10);
    }

    #[test]
    fn decomposition_identity(z in prop::collection::vec(unit_vec(4), 8), tau in 0.05f64..2.0) {
        let d = decomposition_check(&z, &interleaved(8), tau).unwrap();
        prop_assert!(d.residual < 1e-10);
    }

    #[test]
    fn moco_contrast_bounds(q in prop::collection::vec(unit_vec(3), 3), queue in prop::collection::vec(unit_vec(3), 1..6)) {
        let l = clip_contrastive_moco(&q, &q, &queue, 0.2).unwrap();
        prop_assert!(l.value > 0.0);
        prop_assert!(l.d_queue.len() == queue.len());
    }

    #[test]
    fn tc_loss_zero_gradient_sum_over_identical_parts(r in prop::collection::vec(dual_rep(2, 3), 4)) {
        let l = tc_contrast_simclr(&r, &interleaved(4), 0.5).unwrap();
        // Both parts of a representation receive the same gradient.
        for g in &l.grads {
            prop_assert_eq!(&g[0], &g[1]);
        }
    }

    #[test]
    fn queue_matches_fifo_model(cap in 1usize..12, ops in prop::collection::vec((any::<bool>(), 0usize..8), 0..60)) {
        let mut q = NegativeQueue::<u32>::new(cap).unwrap();
        let mut model: VecDeque<u32> = VecDeque::new();
        let mut next = 0u32;
        for (push, n) in ops {
            if push {
                let batch: Vec<u32> = (0..n as u32).map(|i| next + i).collect();
                next += n as u32;
                let evicted = q.enqueue(&batch);
                if n > cap {
                    prop_assert!(evicted.is_err());
                    continue;
                }
                model.extend(batch.iter().copied());
                let mut expect = Vec::new();
                while model.len() > cap {
                    expect.push(model.pop_front().unwrap());
                }
                prop_assert_eq!(evicted.unwrap(), expect);
            } else {
                let got = q.dequeue(n);
                let expect: Vec<u32> = (0..n.min(model.len())).map(|_| model.pop_front().unwrap()).collect();
                prop_assert_eq!(got, expect);
            }
            prop_assert_eq!(q.to_vec(), model.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn momentum_update_contracts_geometrically(seed in 0u64..1000, m in 0.0f64..0.999) {
        let arch = Architecture { frame_dim: 3, hidden_dim: 4, embed_dim: 3, proj_dim: 2, dual_hidden_dim: 2, ..Architecture::default() };
        let q = EncoderParams::init(arch, seed).unwrap();
        let mut k = EncoderParams::init(arch, seed + 1).unwrap();
        let gap0: Vec<f64> = k.values.iter().zip(&q.values).map(|(a, b)| a - b).collect();
        for t in 1..=5 {
            k.momentum_update(&q, m).unwrap();
            for (j, g0) in gap0.iter().enumerate() {
                let expect = m.powi(t) * g0;
                prop_assert!((k.values[j] - q.values[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn variances_match_loops_and_ignore_translation(
        groups in prop::collection::vec(prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..5), 2..6),
        shift in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let feats = |gs: &[Vec<Vec<f64>>]| gs.iter().enumerate().map(|(i, g)| VideoFeatures { video_id: i, features: g.clone() }).collect::<Vec<_>>();
        let rep = compute_variances(&feats(&groups)).unwrap();
        let (inter, intra) = naive_variances(&groups);
        prop_assert!((rep.sigma_inter - inter).abs() < 1e-12);
        prop_assert!((rep.sigma_intra - intra).abs() < 1e-12);
        let moved: Vec<Vec<Vec<f64>>> = groups.iter().map(|g| g.iter().map(|z| z.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect()).collect();
        let rep2 = compute_variances(&feats(&moved)).unwrap();
        prop_assert!((rep.sigma_inter - rep2.sigma_inter).abs() < 1e-10);
        prop_assert!((rep.sigma_intra - rep2.sigma_intra).abs() < 1e-10);
    }

    #[test]
    fn retrieval_accuracy_monotone_in_k(
        q in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0usize..3), 1..8),
        g in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0usize..3), 1..12),
    ) {
        let (qf, ql): (Vec<_>, Vec<_>) = q.into_iter().unzip();
        let (gf, gl): (Vec<_>, Vec<_>) = g.into_iter().unzip();
        let ks = [1, 2, 3, 5, 20];
        let r = retrieval_topk(&qf, &ql, &gf, &gl, &ks).unwrap();
        for w in r.accuracy.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn weighted_per_class_delta_is_overall_delta(
        rows in prop::collection::vec((0usize..6, 0usize..6, 1usize..6), 1..5),
    ) {
        // (correct under A, correct under B, class size)
        let counts: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let acc = |pick: fn(&(usize, usize, usize)) -> usize| rows.iter().map(|r| pick(r).min(r.2) as f64 / r.2 as f64).collect::<Vec<_>>();
        let (a, b) = (acc(|r| r.0), acc(|r| r.1));
        let total: usize = counts.iter().sum();
        let overall = |v: &[f64]| v.iter().zip(&counts).map(|(x, &n)| x * n as f64).sum::<f64>() / total as f64;
        let d = weighted_delta(&per_class_improvement(&a, &b).unwrap(), &counts).unwrap();
        prop_assert!((d - (overall(&b) - overall(&a))).abs() < 1e-12);
    }

    #[test]
    fn override_beats_file_beats_default(file_seed in any::<u32>(), cli_seed in any::<u32>(), tau in 0.01f64..1.0) {
        let text = format!("seed = {file_seed}\n[hyper]\ntau = {tau}\n");
        let c = parse_config(&text, "p", &[]).unwrap();
        prop_assert_eq!(c.seed, file_seed as u64);
        prop_assert_eq!(c.hyper.tau, tau);
        prop_assert_eq!(c.hyper.theta, 0.05);
        let c = parse_config(&text, "p", &[format!("seed={cli_seed}")]).unwrap();
        prop_assert_eq!(c.seed, cli_seed as u64);
        prop_assert_eq!(c.hyper.tau, tau);
    }
}
