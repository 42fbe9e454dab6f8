mod common;

use neural_cache::numerics::{random_tensor, Tensor};
use neural_cache::params::ParamStore;
use neural_cache::renderer::generator_forward;
use neural_cache::training::{
    compute_losses, decode_store, encode_store, load_checkpoint, save_checkpoint, train, train_step, train_warp_head,
    FeatureExtractor, LossBreakdown, LossMode, LossWeights, Optimizers, Sample, TrainConfig, CHECKPOINT_MAGIC,
};
use neural_cache::Error;

fn img(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    random_tensor(&[3, h, w], seed).map(|v| 0.5 + 0.5 * v).cast()
}

fn ones(h: usize, w: usize) -> Tensor<f32> {
    Tensor::full(vec![1, h, w], 1.0)
}

#[test]
fn defaults_follow_the_stated_weights() {
    let w = LossWeights::default();
    assert_eq!((w.tex, w.img, w.perceptual, w.warp_base_img), (1.0, 1.0, 0.1, 0.1));
    let c = TrainConfig::default();
    assert_eq!(c.lr_texture / c.lr_nets, 10.0);
    assert_eq!(c.lr_nets, 1e-4);
    assert_eq!(c.betas, (0.9, 0.999));
    assert_eq!(c.warp_distances, vec![1, 2]);
}

#[test]
fn weighted_totals_by_hand() {
    let w = LossWeights::default();
    let b = LossBreakdown::combine(&w, LossMode::Baseline, 0.2, 0.1, 0.0, 0.3);
    assert!((b.total - 0.33).abs() < 1e-12);
    let b = LossBreakdown::combine(&w, LossMode::Warp, 0.2, 0.1, 0.4, 0.3);
    assert!((b.total - (0.1 * 0.1 + 0.4 + 0.1 * 0.3 + 0.2)).abs() < 1e-12);
}

#[test]
fn perfect_prediction_has_zero_loss() {
    let ex = FeatureExtractor::new(0);
    let gt = img(1, 16, 16);
    for mode in [LossMode::Baseline, LossMode::Warp] {
        let l = compute_losses(&gt, Some(&gt), &gt, &gt, Some(&gt), &ones(16, 16), &LossWeights::default(), mode, &ex)
            .unwrap();
        assert_eq!(l.total, 0.0, "{mode:?}");
    }
}

#[test]
fn zero_versus_one_is_unit_l1() {
    let ex = FeatureExtractor::new(0);
    let z = Tensor::zeros(vec![3, 8, 8]);
    let o = Tensor::full(vec![3, 8, 8], 1.0);
    let w = LossWeights { perceptual: 0.0, ..LossWeights::default() };
    let l = compute_losses(&z, None, &o, &o, None, &ones(8, 8), &w, LossMode::Baseline, &ex).unwrap();
    assert_eq!(l.img, 1.0);
}

#[test]
fn pure_l1_on_two_by_two() {
    let ex = FeatureExtractor::new(0);
    let pred = Tensor::new(vec![3, 2, 2], (0..12).map(|i| i as f32 / 12.0).collect()).unwrap();
    let gt = Tensor::full(vec![3, 2, 2], 0.5f32);
    let tex = Tensor::full(vec![3, 2, 2], 0.25f32);
    let mask = Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
    let w = LossWeights { perceptual: 0.0, ..LossWeights::default() };
    let l = compute_losses(&pred, None, &tex, &gt, None, &mask, &w, LossMode::Baseline, &ex).unwrap();
    let img: f64 = (0..12).map(|i| (i as f64 / 12.0 - 0.5).abs()).sum::<f64>() / 12.0;
    assert!((l.img - img).abs() < 1e-6);
    assert!((l.tex - 0.25).abs() < 1e-6);
    assert!((l.total - (img + 0.25)).abs() < 1e-6);
}

#[test]
fn total_is_the_weighted_sum_of_terms() {
    let ex = FeatureExtractor::new(3);
    let (p, f, t, g, gf) = (img(1, 16, 16), img(2, 16, 16), img(3, 16, 16), img(4, 16, 16), img(5, 16, 16));
    let mask = random_tensor(&[1, 16, 16], 6).map(|v| if v > 0.0 { 1.0 } else { 0.0 }).cast();
    let w = LossWeights::default();
    for mode in [LossMode::Baseline, LossMode::Warp] {
        let l = compute_losses(&p, Some(&f), &t, &g, Some(&gf), &mask, &w, mode, &ex).unwrap();
        let again = LossBreakdown::combine(&w, mode, l.tex, l.img, l.img_warp, l.perceptual);
        assert!((l.total - again.total).abs() < 1e-6, "{mode:?}: {l:?}");
        assert!(l.perceptual > 0.0);
    }
}

#[test]
fn texture_loss_ignores_background() {
    let ex = FeatureExtractor::new(0);
    let (p, t, g) = (img(1, 8, 8), img(2, 8, 8), img(3, 8, 8));
    let mask: Tensor<f32> = Tensor::from_fn(vec![1, 8, 8], |i| if i % 8 < 4 { 1.0 } else { 0.0 });
    let mut g2 = g.clone();
    for c in 0..3 {
        for y in 0..8 {
            for x in 4..8 {
                g2.data_mut()[c * 64 + y * 8 + x] = 0.9;
            }
        }
    }
    let w = LossWeights::default();
    let a = compute_losses(&p, None, &t, &g, None, &mask, &w, LossMode::Baseline, &ex).unwrap();
    let b = compute_losses(&p, None, &t, &g2, None, &mask, &w, LossMode::Baseline, &ex).unwrap();
    assert_eq!(a.tex, b.tex);
    assert_ne!(a.img, b.img);
}

#[test]
fn mismatched_shapes_are_usage_errors() {
    let ex = FeatureExtractor::new(0);
    let r = compute_losses(&img(1, 8, 8), None, &img(2, 8, 8), &img(3, 4, 4), None, &ones(8, 8), &LossWeights::default(), LossMode::Baseline, &ex);
    assert!(matches!(r, Err(Error::Usage(_))), "{r:?}");
    let r = compute_losses(&img(1, 8, 8), None, &img(2, 8, 8), &img(3, 8, 8), None, &ones(8, 8), &LossWeights::default(), LossMode::Warp, &ex);
    assert!(matches!(r, Err(Error::Usage(_))));
}

#[test]
fn identical_runs_give_identical_curves() {
    let frames = common::tiny_frames(8);
    let cfg = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let run = || {
        let mut m = common::tiny_models();
        let log = train(&mut m, &frames, &cfg, LossMode::Warp, None).unwrap();
        (log.iter().map(|e| (e.mode, e.losses)).collect::<Vec<_>>(), m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    // 20% of three epochs rounds to one baseline epoch.
    assert_eq!(a.iter().map(|x| x.0).collect::<Vec<_>>(), vec![LossMode::Baseline, LossMode::Warp, LossMode::Warp]);
    assert_eq!(a[0].1.img_warp, 0.0);
    assert!(a[1].1.img_warp > 0.0);
}

#[test]
fn loss_falls_over_two_hundred_steps() {
    let frames = common::tiny_frames(16);
    // One full batch per epoch, so each logged loss precedes exactly one update.
    let cfg = TrainConfig { epochs: 200, batch_size: 16, crop_fraction: 1.0, ..TrainConfig::default() };
    let mut m = common::tiny_models();
    let log = train(&mut m, &frames, &cfg, LossMode::Baseline, None).unwrap();
    let (early, late) = (log[9].losses.total, log[199].losses.total);
    assert!(late < early, "step 10: {early}, step 200: {late}");
}

#[test]
fn frozen_warp_head_still_trains_texture_and_generator() {
    let frames = common::tiny_frames(4);
    let mut m = common::tiny_models();
    m.warp.params.set_trainable(false);
    let before = m.clone();
    let cfg = TrainConfig::default();
    let mut opt = Optimizers::new(&cfg);
    let ex = FeatureExtractor::new(0);
    let batch = [Sample { base: 0, future: Some(1) }, Sample { base: 2, future: Some(3) }];
    let l = train_step(&mut m, &frames, &batch, &[None, None], &mut opt, &ex, &cfg.weights, LossMode::Warp).unwrap();
    assert!(l.img_warp > 0.0);
    assert_ne!(m.texture, before.texture);
    assert_ne!(m.generator, before.generator);
    assert_eq!(m.warp, before.warp);
    // Gradients are cleared after the update.
    assert!(m.texture.params.iter().all(|(_, t)| t.grad().is_none_or(|g| g.iter().all(|v| *v == 0.0))));
}

#[test]
fn non_finite_loss_names_the_term() {
    let mut frames = common::tiny_frames(2);
    frames[0].image = frames[0].image.map(|_| f32::NAN);
    let mut m = common::tiny_models();
    let cfg = TrainConfig::default();
    let mut opt = Optimizers::new(&cfg);
    let r = train_step(&mut m, &frames, &[Sample { base: 0, future: None }], &[None], &mut opt, &FeatureExtractor::new(0), &cfg.weights, LossMode::Baseline);
    match r {
        Err(Error::NonFinite { term, value }) => {
            assert_eq!(term, "tex");
            assert!(value.is_nan());
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn warp_head_alone_learns_from_fixed_caches() {
    let frames = common::tiny_frames(12);
    let mut m = common::tiny_models();
    let caches: Vec<_> = frames.iter().map(|f| generator_forward(&m.texture, &m.generator, f, None).unwrap().1).collect();
    let cfg = TrainConfig { epochs: 30, batch_size: 11, ..TrainConfig::default() };
    let tex_before = m.texture.clone();
    let log = train_warp_head(&mut m.warp, &m.texture, &caches, &frames, &cfg).unwrap();
    assert!(log[29].losses.img_warp < log[0].losses.img_warp, "{:?} -> {:?}", log[0].losses, log[29].losses);
    assert_eq!(m.texture, tex_before);
    assert!(train_warp_head(&mut m.warp, &m.texture, &caches[1..], &frames, &cfg).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nckp");
    let frames = common::tiny_frames(4);
    let mut m = common::tiny_models();
    train(&mut m, &frames, &TrainConfig { epochs: 1, ..TrainConfig::default() }, LossMode::Warp, None).unwrap();
    save_checkpoint(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    let mut fresh = common::tiny_models();
    load_checkpoint(&mut fresh, &path).unwrap();
    for ((na, a), (nb, b)) in m.to_store().iter().zip(fresh.to_store().iter()) {
        assert_eq!(na, nb);
        assert_eq!(a.shape(), b.shape());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{na}");
    }
}

#[test]
fn checkpoint_errors_are_distinct_and_leave_models_alone() {
    let dir = tempfile::tempdir().unwrap();
    let m = common::tiny_models();
    let good = encode_store(&m.to_store());
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    };

    let mut target = common::tiny_models();
    target.warp.params.get_mut(0).data_mut()[0] = 42.0;
    let untouched = target.clone();

    let p = write("trunc", &good[..good.len() - 1]);
    assert!(matches!(load_checkpoint(&mut target, &p), Err(Error::Truncated { .. })));
    assert_eq!(target, untouched);

    let mut bad = good.clone();
    bad[0] = b'X';
    let p = write("magic", &bad);
    assert!(matches!(load_checkpoint(&mut target, &p), Err(Error::BadMagic { .. })));

    let mut bad = good.clone();
    bad[4] = 9;
    let p = write("version", &bad);
    assert!(matches!(load_checkpoint(&mut target, &p), Err(Error::VersionMismatch { found: 9, .. })));

    let store = m.to_store();
    let mut renamed = ParamStore::new();
    for (n, t) in store.iter() {
        let n = if n == "warp/w1.weight" { "warp/w1.kernel" } else { n };
        renamed.add(n, t.clone());
    }
    let p = write("renamed", &encode_store(&renamed));
    match load_checkpoint(&mut target, &p) {
        Err(Error::ParamMismatch { name, .. }) => assert!(name.contains("w1"), "{name}"),
        other => panic!("expected a parameter mismatch, got {other:?}"),
    }
    assert_eq!(target, untouched);
    assert!(decode_store(&good, &p).is_ok());

    let missing = dir.path().join("absent.nckp");
    assert!(matches!(load_checkpoint(&mut target, &missing), Err(Error::File { .. })));
}
