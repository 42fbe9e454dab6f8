use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var};
use crate::params::{seeded, Bound, ParamStore};

pub const TEXTURE_LEVELS: usize = 4;
/// First channel (zero-based) modulated by the view SH code.
pub const SH_CHANNEL_OFFSET: usize = 3;
pub const SH_CHANNELS: usize = 9;

/// Learnable four-level feature pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralTexture {
    pub params: ParamStore,
    channels: usize,
    size: usize,
}

impl NeuralTexture {
    /// `channels x size x size` finest level, halving per level.
    pub fn new(channels: usize, size: usize, seed: u64) -> Result<Self> {
        if channels < SH_CHANNEL_OFFSET + SH_CHANNELS {
            return Err(Error::config(format!("neural texture needs at least 12 channels, got {channels}")));
        }
        if !size.is_multiple_of(1 << (TEXTURE_LEVELS - 1)) || size == 0 {
            return Err(Error::config(format!("texture size {size} must be divisible by 8")));
        }
        let mut rng = seeded(seed, 1);
        let mut params = ParamStore::new();
        for l in 0..TEXTURE_LEVELS {
            let s = size >> l;
            params.add(format!("level{l}"), Tensor::from_fn(vec![channels, s, s], |_| rng.gen_range(-0.05f32..0.05)));
        }
        Ok(Self { params, channels, size })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn level(&self, l: usize) -> &Tensor<f32> {
        self.params.get(l)
    }

    pub fn level_mut(&mut self, l: usize) -> &mut Tensor<f32> {
        self.params.get_mut(l)
    }

    /// Sum of bilinear samples of every level at `uv`.
    pub fn sample<'a, T: Scalar>(&self, tape: &Tape<'a, T>, bound: &Bound, uv: &Tensor<f32>) -> Result<Var> {
        let uv = uv.cast::<T>();
        let mut acc = tape.grid_sample(bound.get(0), &uv)?;
        for l in 1..TEXTURE_LEVELS {
            let s = tape.grid_sample(bound.get(l), &uv)?;
            acc = tape.add(acc, s)?;
        }
        Ok(acc)
    }
}

/// Samples all texture levels at `uv` without recording gradients.
pub fn sample_multiscale_texture(tex: &NeuralTexture, uv: &Tensor<f32>) -> Result<Tensor<f32>> {
    let tape = Tape::no_grad();
    let b = tex.params.bind(&tape);
    let f = tex.sample(&tape, &b, uv)?;
    Ok(tape.detach(f))
}

/// Multiplies channels 3..12 of `features` by the SH code of `view_dir`.
pub fn sh_view_modulate<'a>(tape: &Tape<'a, f32>, features: Var, view_dir: [f64; 3]) -> Result<Var> {
    let c = tape.shape(features)[0];
    if c < SH_CHANNEL_OFFSET + SH_CHANNELS {
        return Err(Error::config(format!("SH modulation needs at least 12 channels, got {c}")));
    }
    let sh = crate::numerics::sh_basis9(view_dir)?;
    let coeffs = tape.constant(Tensor::new(vec![SH_CHANNELS], sh.iter().map(|&v| v as f32).collect())?);
    tape.modulate_channels(features, coeffs, SH_CHANNEL_OFFSET)
}
