use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::params::{seeded, Bound, ConvLayer, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.2;

/// U-Net generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Texture feature channels.
    pub in_channels: usize,
    pub base: usize,
    /// Total encoder plus decoder layers.
    pub depth: usize,
    /// Bilinear upsample + convolution decoding instead of transposed
    /// convolutions.
    pub use_upconv: bool,
    /// Gaussian blur on the bottleneck.
    pub use_lpf: bool,
    /// Also feed the previous frame's features.
    pub two_frame_input: bool,
    pub lpf_size: usize,
    pub lpf_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            in_channels: 16,
            base: 32,
            depth: 10,
            use_upconv: true,
            use_lpf: true,
            two_frame_input: false,
            lpf_size: 5,
            lpf_sigma: 1.0,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn levels(&self) -> usize {
        self.depth / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !self.depth.is_multiple_of(2) || self.depth < 6 {
            return Err(Error::config(format!("generator depth must be even and >= 6, got {}", self.depth)));
        }
        if self.base == 0 || self.in_channels == 0 {
            return Err(Error::config("generator channel counts must be positive"));
        }
        Ok(())
    }

    /// Fails unless `h` and `w` are divisible by `2^(depth/2)`.
    pub fn check_resolution(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << self.levels();
        if !h.is_multiple_of(f) || !w.is_multiple_of(f) || h == 0 || w == 0 {
            return Err(Error::config(format!("resolution {h}x{w} is not divisible by {f} (2^(depth/2))")));
        }
        Ok(())
    }

    fn enc_channels(&self, i: usize) -> usize {
        (self.base << (i - 1)).min(8 * self.base)
    }

    fn dec_channels(&self, j: usize) -> usize {
        (self.base << (self.levels() - j)).min(8 * self.base)
    }

    /// Channels of the three cached decoder outputs.
    pub fn cache_channels(&self) -> [usize; 3] {
        let n = self.levels();
        [self.dec_channels(n - 2), self.dec_channels(n - 1), self.dec_channels(n)]
    }
}

/// The deep image generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: ParamStore,
    enc: Vec<ConvLayer>,
    dec: Vec<ConvLayer>,
    out: ConvLayer,
}

/// Output image and the last three decoder feature maps.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorVars {
    pub image: Var,
    pub c3: Var,
    pub c4: Var,
    pub c5: Var,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let n = config.levels();
        let mut rng = seeded(config.seed, 2);
        let mut params = ParamStore::new();
        let mut cin = config.in_channels * if config.two_frame_input { 2 } else { 1 };
        let mut enc = Vec::with_capacity(n);
        for i in 1..=n {
            let cout = config.enc_channels(i);
            enc.push(ConvLayer::new(&mut params, &mut rng, &format!("enc{i}"), cin, cout, 3, 2));
            cin = cout;
        }
        let mut dec: Vec<ConvLayer> = Vec::with_capacity(n);
        for j in 1..=n {
            let cin = if j == 1 { enc[n - 1].cout } else { dec[j - 2].cout + enc[n - j].cout };
            let cout = config.dec_channels(j);
            dec.push(ConvLayer::new(&mut params, &mut rng, &format!("dec{j}"), cin, cout, 3, 1));
        }
        let out = ConvLayer::new(&mut params, &mut rng, "out", config.dec_channels(n), 3, 1, 1);
        Ok(Self { config, params, enc, dec, out })
    }

    /// Runs the U-Net on bound parameters.
    pub fn forward<'a>(&self, tape: &Tape<'a, f32>, b: &Bound, input: Var) -> Result<GeneratorVars> {
        let shape = tape.shape(input);
        let expect = self.enc[0].cin;
        if shape.len() != 3 || shape[0] != expect {
            return Err(Error::config(format!("generator expects {expect} input channels, got shape {shape:?}")));
        }
        self.config.check_resolution(shape[1], shape[2])?;
        let n = self.config.levels();
        let mut skips = Vec::with_capacity(n);
        let mut x = input;
        for layer in &self.enc {
            let y = layer.conv(tape, b, x)?;
            x = tape.leaky_relu(y, LEAKY_SLOPE);
            skips.push(x);
        }
        if self.config.use_lpf {
            x = tape.gaussian_lpf(x, self.config.lpf_size, self.config.lpf_sigma)?;
        }
        let mut outs = Vec::with_capacity(n);
        for (j, layer) in self.dec.iter().enumerate() {
            let inp = if j == 0 { x } else { tape.concat(&[x, skips[n - 1 - j]])? };
            let y = if self.config.use_upconv { layer.upconv(tape, b, inp)? } else { layer.deconv(tape, b, inp)? };
            x = tape.leaky_relu(y, LEAKY_SLOPE);
            outs.push(x);
        }
        let logits = self.out.conv(tape, b, x)?;
        Ok(GeneratorVars { image: tape.squash01(logits), c3: outs[n - 3], c4: outs[n - 2], c5: outs[n - 1] })
    }

    /// Multiply-accumulates of one forward pass at `h x w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let n = self.config.levels();
        let mut total = 0;
        for (i, l) in self.enc.iter().enumerate() {
            total += l.macs(h >> (i + 1), w >> (i + 1));
        }
        for (j, l) in self.dec.iter().enumerate() {
            let s = n - 1 - j;
            total += l.macs(h >> s, w >> s);
        }
        total + self.out.macs(h, w)
    }

    /// Encoder and decoder layers in execution order, then the output layer.
    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.enc.iter().chain(&self.dec).chain(std::iter::once(&self.out))
    }
}
