use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Gradients, Tape, Tensor};
use crate::params::{Bound, ParamStore};
use crate::renderer::{render_on_tape, Cache};
use crate::scene::{Frame, UvMap};
use crate::warp::{CacheVars, WarpInput, WarpNet};

use super::losses::{loss_on_tape, FeatureExtractor, LossBreakdown, LossInputs, LossMode, LossWeights};
use super::Models;

/// Optimization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_nets: f64,
    pub lr_texture: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub seed: u64,
    /// Warp distances sampled uniformly per training pair.
    pub warp_distances: Vec<usize>,
    /// Side of the random training crop relative to the frame.
    pub crop_fraction: f64,
    /// Leading fraction of epochs that train the generator alone in warp
    /// mode.
    pub curriculum_fraction: f64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr_nets: 1e-4,
            lr_texture: 1e-3,
            betas: (0.9, 0.999),
            batch_size: 2,
            seed: 0,
            warp_distances: vec![1, 2],
            crop_fraction: 0.75,
            curriculum_fraction: 0.2,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.warp_distances.is_empty() || self.warp_distances.contains(&0) {
            return Err(Error::config("warp distances must be a non-empty list of positive integers"));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(Error::config("crop fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.curriculum_fraction) {
            return Err(Error::config("curriculum fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn max_distance(&self) -> usize {
        self.warp_distances.iter().copied().max().unwrap_or(1)
    }

    /// Crop side for a frame side `n`: `crop_fraction * n` when that is a
    /// multiple of `multiple`, otherwise `n` (no crop).
    pub fn crop_size(&self, n: usize, multiple: usize) -> usize {
        let c = (self.crop_fraction * n as f64).round() as usize;
        if c > 0 && c < n && c.is_multiple_of(multiple) {
            c
        } else {
            n
        }
    }
}

/// Adam states for the three parameter groups.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub texture: AdamState,
    pub generator: AdamState,
    pub warp: AdamState,
}

impl Optimizers {
    pub fn new(cfg: &TrainConfig) -> Self {
        let (b1, b2) = cfg.betas;
        Self {
            texture: AdamState::with_betas(cfg.lr_texture, b1, b2),
            generator: AdamState::with_betas(cfg.lr_nets, b1, b2),
            warp: AdamState::with_betas(cfg.lr_nets, b1, b2),
        }
    }
}

/// One supervised pair: the generator frame and, in warp mode, the target
/// frame of the warp head (indices into the frame list).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub base: usize,
    pub future: Option<usize>,
}

/// Crop window applied to every frame of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub y0: usize,
    pub x0: usize,
    pub h: usize,
    pub w: usize,
}

/// Spatial crop of the per-pixel parts of a frame.
pub fn crop_frame(f: &Frame, c: &Crop) -> Result<Frame> {
    Ok(Frame {
        params: f.params.clone(),
        h_obj: f.h_obj,
        uv: UvMap { uv: f.uv.uv.crop(c.y0, c.x0, c.h, c.w)?, mask: f.uv.mask.crop(c.y0, c.x0, c.h, c.w)? },
        image: f.image.crop(c.y0, c.x0, c.h, c.w)?,
    })
}

fn trainable(store: &ParamStore) -> bool {
    store.iter().any(|(_, t)| t.requires_grad())
}

fn check_finite(b: &LossBreakdown) -> Result<()> {
    match b.first_non_finite() {
        Some((term, value)) => Err(Error::NonFinite { term: term.to_string(), value }),
        None => Ok(()),
    }
}

struct StepGrads {
    grads: Gradients<f32>,
    tex: Bound,
    gen: Bound,
    warp: Option<Bound>,
    losses: LossBreakdown,
}

#[allow(clippy::too_many_arguments)]
fn forward_backward(
    models: &Models,
    extractor: &FeatureExtractor,
    base: &Frame,
    prev: Option<&Frame>,
    future: Option<&Frame>,
    weights: &LossWeights,
    mode: LossMode,
    scale: f64,
) -> Result<StepGrads> {
    let tape = Tape::new();
    let tb = models.texture.params.bind(&tape);
    let gb = models.generator.params.bind(&tape);
    let rv = render_on_tape(&tape, &models.texture, &tb, &models.generator, &gb, base, prev)?;
    let tex_rgb = tape.slice_channels(rv.features, 0, 3)?;
    let (pred_future, wb) = match (mode, future) {
        (LossMode::Warp, Some(fut)) => {
            let wb = models.warp.params.bind(&tape);
            let input = WarpInput::between(base, fut)?;
            let cv = CacheVars { c3: rv.gen.c3, c4: rv.gen.c4, c5: rv.gen.c5 };
            let tex = models.warp.config.flags.exwarp.then_some((&models.texture, &tb));
            (Some(models.warp.forward(&tape, &wb, cv, &input, tex)?), Some(wb))
        }
        (LossMode::Warp, None) => return Err(Error::usage("warp-mode sample without a future frame")),
        (LossMode::Baseline, _) => (None, None),
    };
    let inputs = LossInputs {
        pred_t: rv.gen.image,
        pred_future,
        tex_rgb,
        gt_t: &base.image,
        gt_future: future.map(|f| &f.image),
        mask_t: &base.uv.mask,
    };
    let (loss, losses) = loss_on_tape(&tape, extractor, &inputs, weights, mode)?;
    check_finite(&losses)?;
    let scaled = tape.scale(loss, scale);
    let grads = tape.backward(scaled)?;
    Ok(StepGrads { grads, tex: tb, gen: gb, warp: wb, losses })
}

/// Forward, backward and one Adam update over a batch; gradients are
/// cleared afterwards. Returns the batch-mean losses.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    models: &mut Models,
    frames: &[Frame],
    batch: &[Sample],
    crops: &[Option<Crop>],
    opt: &mut Optimizers,
    extractor: &FeatureExtractor,
    weights: &LossWeights,
    mode: LossMode,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    let mut mean = LossBreakdown::default();
    let scale = 1.0 / batch.len() as f64;
    for (i, s) in batch.iter().enumerate() {
        let crop = crops.get(i).copied().flatten();
        let get = |idx: usize| -> Result<Frame> {
            let f = frames.get(idx).ok_or_else(|| Error::usage(format!("frame index {idx} out of range")))?;
            match crop {
                Some(c) => crop_frame(f, &c),
                None => Ok(f.clone()),
            }
        };
        let base = get(s.base)?;
        let prev = if models.generator.config.two_frame_input && s.base > 0 { Some(get(s.base - 1)?) } else { None };
        let future = s.future.map(get).transpose()?;
        let step =
            forward_backward(models, extractor, &base, prev.as_ref(), future.as_ref(), weights, mode, scale)?;
        models.texture.params.accumulate(&step.grads, &step.tex)?;
        models.generator.params.accumulate(&step.grads, &step.gen)?;
        if let Some(wb) = &step.warp {
            models.warp.params.accumulate(&step.grads, wb)?;
        }
        mean.add_scaled(&step.losses, scale);
    }
    if trainable(&models.texture.params) {
        models.texture.params.adam_update(&mut opt.texture)?;
    }
    if trainable(&models.generator.params) {
        models.generator.params.adam_update(&mut opt.generator)?;
    }
    if mode == LossMode::Warp && trainable(&models.warp.params) {
        models.warp.params.adam_update(&mut opt.warp)?;
    }
    models.texture.params.zero_grad();
    models.generator.params.zero_grad();
    models.warp.params.zero_grad();
    Ok(mean)
}

/// Mean losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mode: LossMode,
    pub steps: usize,
    pub losses: LossBreakdown,
    pub wall_s: f64,
}

pub const LOG_HEADER: &str = "epoch,mode,steps,total,tex,img,img_warp,perceptual,wall_s";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        let mode = match self.mode {
            LossMode::Baseline => "baseline",
            LossMode::Warp => "warp",
        };
        format!(
            "{},{mode},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch, self.steps, l.total, l.tex, l.img, l.img_warp, l.perceptual, self.wall_s
        )
    }
}

fn epoch_samples(n: usize, mode: LossMode, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let mut samples: Vec<Sample> = match mode {
        LossMode::Baseline => (0..n).map(|base| Sample { base, future: None }).collect(),
        LossMode::Warp => {
            let dmax = cfg.max_distance();
            (0..n.saturating_sub(dmax))
                .map(|base| {
                    let d = cfg.warp_distances[rng.gen_range(0..cfg.warp_distances.len())];
                    Sample { base, future: Some(base + d) }
                })
                .collect()
        }
    };
    samples.shuffle(rng);
    samples
}

/// Trains on `frames` for `cfg.epochs` epochs. In warp mode the first
/// `curriculum_fraction` of epochs run in baseline mode. Each epoch's
/// losses are appended to `log` as CSV when given.
pub fn train(
    models: &mut Models,
    frames: &[Frame],
    cfg: &TrainConfig,
    mode: LossMode,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::usage("no training frames"));
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    models.generator.config.check_resolution(h, w)?;
    let multiple = 1usize << models.generator.config.levels();
    let (ch, cw) = (cfg.crop_size(h, multiple), cfg.crop_size(w, multiple));
    let extractor = FeatureExtractor::new(cfg.seed ^ 0x5EED);
    let mut opt = Optimizers::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let warmup = match mode {
        LossMode::Warp => (cfg.curriculum_fraction * cfg.epochs as f64).round() as usize,
        LossMode::Baseline => cfg.epochs,
    };
    if let Some(l) = log.as_deref_mut() {
        writeln!(l, "{LOG_HEADER}")?;
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let m = if epoch < warmup { LossMode::Baseline } else { LossMode::Warp };
        let samples = epoch_samples(frames.len(), m, cfg, &mut rng);
        let mut mean = LossBreakdown::default();
        let mut steps = 0;
        for batch in samples.chunks(cfg.batch_size) {
            let crops: Vec<Option<Crop>> = batch
                .iter()
                .map(|_| {
                    (ch < h || cw < w).then(|| Crop {
                        y0: rng.gen_range(0..=h - ch),
                        x0: rng.gen_range(0..=w - cw),
                        h: ch,
                        w: cw,
                    })
                })
                .collect();
            let l = train_step(models, frames, batch, &crops, &mut opt, &extractor, &cfg.weights, m)?;
            mean.add_scaled(&l, 1.0);
            steps += 1;
        }
        if steps > 0 {
            let s = mean;
            mean = LossBreakdown::default();
            mean.add_scaled(&s, 1.0 / steps as f64);
        }
        let entry = EpochLog { epoch, mode: m, steps, losses: mean, wall_s: start.elapsed().as_secs_f64() };
        if let Some(l) = log.as_deref_mut() {
            writeln!(l, "{}", entry.csv_row())?;
        }
        history.push(entry);
    }
    Ok(history)
}

/// Trains only the warp head against fixed caches. `caches[i]` must be the
/// cache of `frames[i]`; the texture is only read by the explicit variant.
pub fn train_warp_head(
    warp: &mut WarpNet,
    texture: &crate::renderer::NeuralTexture,
    caches: &[Cache],
    frames: &[Frame],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if caches.len() != frames.len() {
        return Err(Error::usage("one cache per frame is required"));
    }
    let extractor = FeatureExtractor::new(cfg.seed ^ 0x5EED);
    let mut opt = AdamState::with_betas(cfg.lr_nets, cfg.betas.0, cfg.betas.1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let zero_rgb = Tensor::zeros(vec![3, frames[0].height(), frames[0].width()]);
    let weights = LossWeights { tex: 0.0, warp_base_img: 0.0, ..cfg.weights };
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let samples = epoch_samples(frames.len(), LossMode::Warp, cfg, &mut rng);
        let mut mean = LossBreakdown::default();
        let mut steps = 0;
        for batch in samples.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for s in batch {
                let fut = &frames[s.future.expect("warp sample")];
                let cache = &caches[s.base];
                let (grads, wb, losses) = {
                    let tape = Tape::new();
                    let wb = warp.params.bind(&tape);
                    let input = WarpInput::from_cache(cache, fut)?;
                    let cv = CacheVars {
                        c3: tape.param(&cache.c3),
                        c4: tape.param(&cache.c4),
                        c5: tape.param(&cache.c5),
                    };
                    let tb = texture.params.bind(&tape);
                    let tex = warp.config.flags.exwarp.then_some((texture, &tb));
                    let pred = warp.forward(&tape, &wb, cv, &input, tex)?;
                    let zero = tape.constant(zero_rgb.clone());
                    let inputs = LossInputs {
                        pred_t: zero,
                        pred_future: Some(pred),
                        tex_rgb: zero,
                        gt_t: &zero_rgb,
                        gt_future: Some(&fut.image),
                        mask_t: &frames[s.base].uv.mask,
                    };
                    let (loss, losses) = loss_on_tape(&tape, &extractor, &inputs, &weights, LossMode::Warp)?;
                    check_finite(&losses)?;
                    let scaled = tape.scale(loss, scale);
                    (tape.backward(scaled)?, wb, losses)
                };
                warp.params.accumulate(&grads, &wb)?;
                mean.add_scaled(&losses, scale);
            }
            warp.params.adam_update(&mut opt)?;
            warp.params.zero_grad();
            steps += 1;
        }
        if steps > 0 {
            let s = mean;
            mean = LossBreakdown::default();
            mean.add_scaled(&s, 1.0 / steps as f64);
        }
        history.push(EpochLog { epoch, mode: LossMode::Warp, steps, losses: mean, wall_s: start.elapsed().as_secs_f64() });
    }
    Ok(history)
}
