//! Implicit warp head: a pose MLP and two up-convolution stages that turn
//! a cache and new frame parameters into the new frame.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::params::{seeded, Bound, ConvLayer, ParamStore};
use crate::renderer::{Cache, GeneratorConfig, NeuralTexture, LEAKY_SLOPE, SH_CHANNELS, SH_CHANNEL_OFFSET};
use crate::scene::Frame;

/// Warp-head input switches, one per ablation component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AblationFlags {
    /// UV-map difference, pooled to the cache trunk resolution.
    pub concat_uv: bool,
    /// Pose and camera with their deltas.
    pub use_theta: bool,
    /// Embed the pose vector through the MLP instead of tiling it raw.
    pub use_mlp: bool,
    /// Object SH code in the pose vector.
    pub sh_pose: bool,
    /// Modulate the skip caches by the SH-code delta.
    pub sh_skips: bool,
    /// Explicit texture resampling at the new frame's UVs.
    pub exwarp: bool,
    /// Expression and its delta in the pose vector.
    pub exp: bool,
}

impl AblationFlags {
    pub const FULL: Self =
        Self { concat_uv: true, use_theta: true, use_mlp: true, sh_pose: true, sh_skips: true, exwarp: false, exp: true };

    /// Component-by-component rows, ending with the explicit variant and
    /// the full implicit configuration.
    pub fn table_rows() -> Vec<(&'static str, Self)> {
        let none = Self { concat_uv: false, use_theta: false, use_mlp: false, sh_pose: false, sh_skips: false, exwarp: false, exp: false };
        let uv = Self { concat_uv: true, ..none };
        let theta = Self { use_theta: true, ..uv };
        let mlp = Self { use_mlp: true, ..theta };
        let sh_pose = Self { sh_pose: true, ..mlp };
        let sh_skips = Self { sh_skips: true, ..sh_pose };
        let exwarp = Self { exwarp: true, ..sh_skips };
        vec![
            ("uv", uv),
            ("uv+theta", theta),
            ("uv+theta+mlp", mlp),
            ("+sh_pose", sh_pose),
            ("+sh_skips", sh_skips),
            ("+exwarp", exwarp),
            ("full", Self::FULL),
        ]
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.concat_uv, "uv"),
            (self.use_theta, "theta"),
            (self.use_mlp, "mlp"),
            (self.sh_pose, "sh_pose"),
            (self.sh_skips, "sh_skips"),
            (self.exwarp, "exwarp"),
            (self.exp, "exp"),
        ] {
            if on {
                parts.push(name);
            }
        }
        parts.join("+")
    }
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::FULL
    }
}

/// Warp head settings.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpConfig {
    /// Pose embedding width.
    pub embed: usize,
    /// Output channels of the first stage; the second has half.
    pub base: usize,
    pub expr_dims: usize,
    /// Channels of the three cached maps.
    pub cache_channels: [usize; 3],
    pub texture_channels: usize,
    pub use_c4: bool,
    pub use_c5: bool,
    pub flags: AblationFlags,
    pub seed: u64,
}

impl WarpConfig {
    pub fn for_generator(gen: &GeneratorConfig, expr_dims: usize) -> Self {
        Self {
            embed: 32,
            base: gen.base,
            expr_dims,
            cache_channels: gen.cache_channels(),
            texture_channels: gen.in_channels,
            use_c4: true,
            use_c5: true,
            flags: AblationFlags::FULL,
            seed: 3,
        }
    }

    /// Length of the concatenated pose vector.
    pub fn pose_dim(&self) -> usize {
        let f = &self.flags;
        (if f.use_theta { 18 } else { 0 }) + (if f.exp { 2 * self.expr_dims } else { 0 }) + (if f.sh_pose { 9 } else { 0 })
    }

    fn pose_channels(&self) -> usize {
        match (self.pose_dim(), self.flags.use_mlp) {
            (0, _) => 0,
            (_, true) => self.embed,
            (d, false) => d,
        }
    }

    fn w1_inputs(&self) -> usize {
        self.cache_channels[0]
            + if self.flags.concat_uv { 2 } else { 0 }
            + self.pose_channels()
            + if self.flags.exwarp { self.texture_channels } else { 0 }
    }
}

/// Parameter deltas between a cached frame and the frame to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpInput<'f> {
    pub cached_t: usize,
    pub frame: &'f Frame,
    pub d_theta: [f64; 6],
    pub d_cam: [f64; 3],
    pub d_expr: Vec<f64>,
    pub d_h: [f64; 9],
    pub d_uv: Tensor<f32>,
}

impl<'f> WarpInput<'f> {
    pub fn from_cache(cache: &Cache, frame: &'f Frame) -> Result<Self> {
        Self::build(cache.t, &cache.theta, &cache.cam, &cache.expr, &cache.h_obj, &cache.uv, frame)
    }

    /// Deltas of `frame` against `base`, as if `base` had been cached.
    pub fn between(base: &Frame, frame: &'f Frame) -> Result<Self> {
        let p = &base.params;
        Self::build(base.t(), &p.theta, &p.cam, &p.expr, &base.h_obj, &base.uv.uv, frame)
    }

    fn build(
        t: usize,
        theta: &[f64; 6],
        cam: &[f64; 3],
        expr: &[f64],
        h: &[f64; 9],
        uv: &Tensor<f32>,
        frame: &'f Frame,
    ) -> Result<Self> {
        let p = &frame.params;
        if expr.len() != p.expr.len() {
            return Err(Error::config(format!("expression size {} vs cached {}", p.expr.len(), expr.len())));
        }
        let d_uv = frame.uv.uv.zip_map(uv, |a, b| a - b)?;
        Ok(Self {
            cached_t: t,
            frame,
            d_theta: std::array::from_fn(|i| p.theta[i] - theta[i]),
            d_cam: std::array::from_fn(|i| p.cam[i] - cam[i]),
            d_expr: p.expr.iter().zip(expr).map(|(a, b)| a - b).collect(),
            d_h: std::array::from_fn(|i| frame.h_obj[i] - h[i]),
            d_uv,
        })
    }

    /// Frames between the cached frame and the target.
    pub fn distance(&self) -> isize {
        self.frame.t() as isize - self.cached_t as isize
    }

    /// Pose vector in the order (p, dp, theta, dtheta, e, de, h), with
    /// components dropped per `flags`.
    pub fn pose_vector(&self, flags: &AblationFlags) -> Vec<f64> {
        let p = &self.frame.params;
        let mut v = Vec::new();
        if flags.use_theta {
            v.extend(p.cam);
            v.extend(self.d_cam);
            v.extend(p.theta);
            v.extend(self.d_theta);
        }
        if flags.exp {
            v.extend(&p.expr);
            v.extend(&self.d_expr);
        }
        if flags.sh_pose {
            v.extend(self.frame.h_obj);
        }
        v
    }
}

/// Cached decoder features as tape values.
#[derive(Debug, Clone, Copy)]
pub struct CacheVars {
    pub c3: Var,
    pub c4: Var,
    pub c5: Var,
}

/// The shallow warp network.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpNet {
    pub config: WarpConfig,
    pub params: ParamStore,
    mlp: Option<(usize, usize)>,
    w1: ConvLayer,
    w2: ConvLayer,
    out: ConvLayer,
}

impl WarpNet {
    pub fn new(config: WarpConfig) -> Result<Self> {
        if config.base < 2 || config.embed == 0 {
            return Err(Error::config("warp widths must be positive"));
        }
        let mut rng = seeded(config.seed, 4);
        let mut params = ParamStore::new();
        let pose_dim = config.pose_dim();
        let mlp = if config.flags.use_mlp && pose_dim > 0 {
            let w = params.add("mlp.weight", crate::params::init_uniform(&mut rng, vec![config.embed, pose_dim], pose_dim));
            let b = params.add("mlp.bias", Tensor::zeros(vec![config.embed]));
            Some((w, b))
        } else {
            None
        };
        let [_, c4, c5] = config.cache_channels;
        let w1 = ConvLayer::new(&mut params, &mut rng, "w1", config.w1_inputs(), config.base, 3, 1);
        let w2_in = config.base + if config.use_c4 { c4 } else { 0 };
        let w2 = ConvLayer::new(&mut params, &mut rng, "w2", w2_in, config.base / 2, 3, 1);
        let out_in = config.base / 2 + if config.use_c5 { c5 } else { 0 };
        let out = ConvLayer::new(&mut params, &mut rng, "out", out_in, 3, 1, 1);
        Ok(Self { config, params, mlp, w1, w2, out })
    }

    /// `tanh(A x + b)` on a pose vector.
    pub fn embed_on_tape<'a, T: Scalar>(&self, tape: &Tape<'a, T>, b: &Bound, pose: Var) -> Result<Var> {
        let (w, bias) = self.mlp.ok_or_else(|| Error::config("this warp head has no pose MLP"))?;
        let n = tape.shape(pose).iter().product::<usize>();
        if n != self.config.pose_dim() {
            return Err(Error::config(format!("pose vector has {n} entries, expected {}", self.config.pose_dim())));
        }
        let y = tape.linear(pose, b.get(w), b.get(bias))?;
        Ok(tape.tanh(y))
    }

    /// Records the warp on `tape`. `texture` is required for the explicit
    /// variant.
    pub fn forward<'a, T: Scalar>(
        &self,
        tape: &Tape<'a, T>,
        b: &Bound,
        cache: CacheVars,
        input: &WarpInput<'_>,
        texture: Option<(&NeuralTexture, &Bound)>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let flags = &cfg.flags;
        let (h, w) = (input.frame.height(), input.frame.width());
        let s3 = tape.shape(cache.c3);
        let s4 = tape.shape(cache.c4);
        let s5 = tape.shape(cache.c5);
        let expect = [
            (s3.as_slice(), cfg.cache_channels[0], h / 4, w / 4, "C3"),
            (s4.as_slice(), cfg.cache_channels[1], h / 2, w / 2, "C4"),
            (s5.as_slice(), cfg.cache_channels[2], h, w, "C5"),
        ];
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::config(format!("warp output {h}x{w} must be divisible by 4")));
        }
        for (shape, c, eh, ew, name) in expect {
            if shape != [c, eh, ew] {
                return Err(Error::config(format!("{name} has shape {shape:?}, warp head expects [{c}, {eh}, {ew}]")));
            }
        }
        let (h4, w4) = (h / 4, w / 4);
        let mut parts = vec![cache.c3];
        if flags.concat_uv {
            let du = tape.constant(input.d_uv.cast());
            parts.push(tape.avg_pool(du, 4)?);
        }
        let pose = input.pose_vector(flags);
        if !pose.is_empty() {
            let pv = tape.constant(Tensor::new(vec![pose.len()], pose.iter().map(|&v| T::of(v)).collect())?);
            let e = if self.mlp.is_some() { self.embed_on_tape(tape, b, pv)? } else { pv };
            parts.push(tape.broadcast_spatial(e, h4, w4));
        }
        if flags.exwarp {
            let (tex, tb) = texture.ok_or_else(|| Error::config("explicit warp needs the neural texture"))?;
            let f = tex.sample(tape, tb, &input.frame.uv.uv)?;
            let f = tape.mask_pixels(f, &input.frame.uv.mask.cast())?;
            parts.push(tape.avg_pool(f, 4)?);
        }
        let x = tape.concat(&parts)?;
        let y = self.w1.upconv(tape, b, x)?;
        let mut f1 = tape.leaky_relu(y, LEAKY_SLOPE);
        if cfg.use_c4 {
            let c4 = self.skip(tape, cache.c4, input)?;
            f1 = tape.concat(&[f1, c4])?;
        }
        let y = self.w2.upconv(tape, b, f1)?;
        let mut f2 = tape.leaky_relu(y, LEAKY_SLOPE);
        if cfg.use_c5 {
            let c5 = self.skip(tape, cache.c5, input)?;
            f2 = tape.concat(&[f2, c5])?;
        }
        let logits = self.out.conv(tape, b, f2)?;
        Ok(tape.squash01(logits))
    }

    fn skip<'a, T: Scalar>(&self, tape: &Tape<'a, T>, c: Var, input: &WarpInput<'_>) -> Result<Var> {
        if !self.config.flags.sh_skips || tape.shape(c)[0] < SH_CHANNEL_OFFSET + SH_CHANNELS {
            return Ok(c);
        }
        let dh = tape.constant(Tensor::new(vec![SH_CHANNELS], input.d_h.iter().map(|&v| T::of(v)).collect())?);
        tape.modulate_channels(c, dh, SH_CHANNEL_OFFSET)
    }

    /// Multiply-accumulates of one warp at `h x w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let mlp = if self.mlp.is_some() { (self.config.embed * self.config.pose_dim()) as u64 } else { 0 };
        mlp + self.w1.macs(h / 2, w / 2) + self.w2.macs(h, w) + self.out.macs(h, w)
    }

    pub fn layers(&self) -> [&ConvLayer; 3] {
        [&self.w1, &self.w2, &self.out]
    }

    pub fn has_mlp(&self) -> bool {
        self.mlp.is_some()
    }
}

/// Pose embedding of explicit inputs without recording gradients.
#[allow(clippy::too_many_arguments)]
pub fn pose_embed(
    net: &WarpNet,
    cam: &[f64],
    d_cam: &[f64],
    theta: &[f64],
    d_theta: &[f64],
    expr: &[f64],
    d_expr: &[f64],
    h_obj: &[f64],
) -> Result<Vec<f32>> {
    let v: Vec<f32> = [cam, d_cam, theta, d_theta, expr, d_expr, h_obj].concat().iter().map(|&x| x as f32).collect();
    let tape = Tape::no_grad();
    let b = net.params.bind(&tape);
    let x = tape.constant(Tensor::new(vec![v.len()], v)?);
    let e = net.embed_on_tape(&tape, &b, x)?;
    Ok(tape.detach(e).into_data())
}

fn run(net: &WarpNet, cache: &Cache, frame: &Frame, tex: Option<&NeuralTexture>) -> Result<Tensor<f32>> {
    let input = WarpInput::from_cache(cache, frame)?;
    let tape = Tape::no_grad();
    let b = net.params.bind(&tape);
    let cv = CacheVars {
        c3: tape.param(&cache.c3),
        c4: tape.param(&cache.c4),
        c5: tape.param(&cache.c5),
    };
    let tb = tex.map(|t| (t, t.params.bind(&tape)));
    let out = net.forward(&tape, &b, cv, &input, tb.as_ref().map(|(t, b)| (*t, b)))?;
    Ok(tape.detach(out))
}

/// Synthesizes `frame` from `cache`.
pub fn warp_forward(net: &WarpNet, cache: &Cache, frame: &Frame) -> Result<Tensor<f32>> {
    if net.config.flags.exwarp {
        return Err(Error::config("explicit warp head needs the texture; use explicit_warp_baseline"));
    }
    run(net, cache, frame, None)
}

/// Warp with the texture additionally resampled at the new frame's UVs.
pub fn explicit_warp_baseline(net: &WarpNet, tex: &NeuralTexture, cache: &Cache, frame: &Frame) -> Result<Tensor<f32>> {
    if !net.config.flags.exwarp {
        return Err(Error::config("warp head was built without the explicit texture input"));
    }
    run(net, cache, frame, Some(tex))
}
