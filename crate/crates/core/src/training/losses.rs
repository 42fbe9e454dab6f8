use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::params::{seeded, Bound, ConvLayer, ParamStore};
use crate::renderer::LEAKY_SLOPE;

/// Loss coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub tex: f64,
    pub img: f64,
    pub perceptual: f64,
    /// Multiplier on the generator's own image loss in warp mode.
    pub warp_base_img: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { tex: 1.0, img: 1.0, perceptual: 0.1, warp_base_img: 0.1 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.tex, self.img, self.perceptual, self.warp_base_img].iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::config("loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Which networks produce the supervised images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Generator only, on frame `t`.
    Baseline,
    /// Generator on `t` and warp head on `t + d`.
    Warp,
}

/// Per-term loss values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub tex: f64,
    /// Image loss of the generator output at `t`.
    pub img: f64,
    /// Image loss of the warped output at `t + d` (warp mode).
    pub img_warp: f64,
    /// Perceptual term of the supervised output (`t` or `t + d`).
    pub perceptual: f64,
}

impl LossBreakdown {
    /// Weighted total of the individual terms.
    pub fn combine(weights: &LossWeights, mode: LossMode, tex: f64, img: f64, img_warp: f64, perceptual: f64) -> Self {
        let total = match mode {
            LossMode::Baseline => weights.tex * tex + weights.img * img + weights.perceptual * perceptual,
            LossMode::Warp => {
                weights.warp_base_img * weights.img * img
                    + weights.img * img_warp
                    + weights.perceptual * perceptual
                    + weights.tex * tex
            }
        };
        Self { total, tex, img, img_warp, perceptual }
    }

    /// Name and value of the first non-finite term, if any.
    pub fn first_non_finite(&self) -> Option<(&'static str, f64)> {
        [("tex", self.tex), ("img", self.img), ("img_warp", self.img_warp), ("perceptual", self.perceptual), ("total", self.total)]
            .into_iter()
            .find(|(_, v)| !v.is_finite())
    }

    pub(crate) fn add_scaled(&mut self, o: &Self, s: f64) {
        self.total += s * o.total;
        self.tex += s * o.tex;
        self.img += s * o.img;
        self.img_warp += s * o.img_warp;
        self.perceptual += s * o.perceptual;
    }
}

/// Fixed random strided convolution features used as a perceptual
/// distance. Never trained.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    params: ParamStore,
    layers: Vec<ConvLayer>,
}

impl FeatureExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = seeded(seed, 9);
        let mut params = ParamStore::new();
        let widths = [(3, 16), (16, 32), (32, 32)];
        let layers = widths
            .iter()
            .enumerate()
            .map(|(i, &(cin, cout))| ConvLayer::new(&mut params, &mut rng, &format!("feat{i}"), cin, cout, 3, 2))
            .collect();
        params.set_trainable(false);
        Self { params, layers }
    }

    fn features<T: Scalar>(&self, tape: &Tape<'_, T>, b: &Bound, x: Var) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut h = x;
        for l in &self.layers {
            let y = l.conv(tape, b, h)?;
            h = tape.leaky_relu(y, LEAKY_SLOPE);
            out.push(h);
        }
        Ok(out)
    }

    /// Sum over layers of the mean absolute feature difference.
    pub fn distance<T: Scalar>(&self, tape: &Tape<'_, T>, pred: Var, target: Var) -> Result<Var> {
        let b = self.params.bind_cast(tape);
        let fp = self.features(tape, &b, pred)?;
        let ft = self.features(tape, &b, target)?;
        let terms = fp
            .iter()
            .zip(&ft)
            .map(|(&a, &t)| Ok((tape.l1_loss(a, t, None)?, 1.0)))
            .collect::<Result<Vec<_>>>()?;
        tape.weighted_sum(&terms)
    }
}

/// Tape inputs of one loss evaluation.
pub struct LossInputs<'i> {
    pub pred_t: Var,
    pub pred_future: Option<Var>,
    /// First three channels of the sampled texture at `t`.
    pub tex_rgb: Var,
    pub gt_t: &'i Tensor<f32>,
    pub gt_future: Option<&'i Tensor<f32>>,
    pub mask_t: &'i Tensor<f32>,
}

/// Records the weighted loss and returns it with its per-term values.
pub fn loss_on_tape<'a>(
    tape: &Tape<'a, f32>,
    extractor: &'a FeatureExtractor,
    inputs: &LossInputs<'_>,
    weights: &LossWeights,
    mode: LossMode,
) -> Result<(Var, LossBreakdown)> {
    let gt_t = tape.constant(inputs.gt_t.clone());
    let tex = tape.l1_loss(inputs.tex_rgb, gt_t, Some(inputs.mask_t)).map_err(as_usage)?;
    let img = tape.l1_loss(inputs.pred_t, gt_t, None).map_err(as_usage)?;
    let (terms, breakdown) = match mode {
        LossMode::Baseline => {
            let p = if weights.perceptual > 0.0 { Some(extractor.distance(tape, inputs.pred_t, gt_t)?) } else { None };
            let pv = p.map_or(0.0, |p| tape.item(p) as f64);
            let mut terms = vec![(tex, weights.tex), (img, weights.img)];
            terms.extend(p.map(|p| (p, weights.perceptual)));
            (terms, LossBreakdown::combine(weights, mode, tape.item(tex) as f64, tape.item(img) as f64, 0.0, pv))
        }
        LossMode::Warp => {
            let (pf, gf) = match (inputs.pred_future, inputs.gt_future) {
                (Some(p), Some(g)) => (p, g),
                _ => return Err(Error::usage("warp-mode loss needs the future prediction and target")),
            };
            let gf = tape.constant(gf.clone());
            let imgw = tape.l1_loss(pf, gf, None).map_err(as_usage)?;
            let p = if weights.perceptual > 0.0 { Some(extractor.distance(tape, pf, gf)?) } else { None };
            let pv = p.map_or(0.0, |p| tape.item(p) as f64);
            let mut terms =
                vec![(img, weights.warp_base_img * weights.img), (imgw, weights.img), (tex, weights.tex)];
            terms.extend(p.map(|p| (p, weights.perceptual)));
            let b = LossBreakdown::combine(
                weights,
                mode,
                tape.item(tex) as f64,
                tape.item(img) as f64,
                tape.item(imgw) as f64,
                pv,
            );
            (terms, b)
        }
    };
    Ok((tape.weighted_sum(&terms)?, breakdown))
}

fn as_usage(e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Usage(m),
        other => other,
    }
}

/// Evaluates the losses on plain tensors. `pred_future`/`gt_future` are
/// required in warp mode.
#[allow(clippy::too_many_arguments)]
pub fn compute_losses(
    pred_t: &Tensor<f32>,
    pred_future: Option<&Tensor<f32>>,
    tex_rgb: &Tensor<f32>,
    gt_t: &Tensor<f32>,
    gt_future: Option<&Tensor<f32>>,
    mask_t: &Tensor<f32>,
    weights: &LossWeights,
    mode: LossMode,
    extractor: &FeatureExtractor,
) -> Result<LossBreakdown> {
    let tape = Tape::no_grad();
    let inputs = LossInputs {
        pred_t: tape.constant(pred_t.clone()),
        pred_future: pred_future.map(|p| tape.constant(p.clone())),
        tex_rgb: tape.constant(tex_rgb.clone()),
        gt_t,
        gt_future,
        mask_t,
    };
    Ok(loss_on_tape(&tape, extractor, &inputs, weights, mode)?.1)
}
