//! Deferred neural renderer: texture sampling, view modulation, the U-Net
//! generator and cache extraction.

mod generator;
mod texture;

pub use generator::{Generator, GeneratorConfig, GeneratorVars, LEAKY_SLOPE};
pub use texture::{
    sample_multiscale_texture, sh_view_modulate, NeuralTexture, SH_CHANNELS, SH_CHANNEL_OFFSET, TEXTURE_LEVELS,
};

use crate::error::Result;
use crate::numerics::{Tape, Tensor, Var};
use crate::params::Bound;
use crate::scene::Frame;

/// Decoder features and frame parameters saved at a keyframe.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    pub t: usize,
    /// Feature maps at `H/4`, `H/2` and `H`.
    pub c3: Tensor<f32>,
    pub c4: Tensor<f32>,
    pub c5: Tensor<f32>,
    pub theta: [f64; 6],
    pub cam: [f64; 3],
    pub expr: Vec<f64>,
    pub h_obj: [f64; 9],
    pub uv: Tensor<f32>,
}

impl Cache {
    pub fn from_frame(frame: &Frame, c3: Tensor<f32>, c4: Tensor<f32>, c5: Tensor<f32>) -> Self {
        Self {
            t: frame.t(),
            c3,
            c4,
            c5,
            theta: frame.params.theta,
            cam: frame.params.cam,
            expr: frame.params.expr.clone(),
            h_obj: frame.h_obj,
            uv: frame.uv.uv.clone(),
        }
    }
}

/// Unit vector from the camera toward the head center.
pub fn view_direction(frame: &Frame) -> [f64; 3] {
    let c = frame.params.head_center();
    let p = frame.params.cam;
    [c[0] - p[0], c[1] - p[1], c[2] - p[2]]
}

/// Recorded renderer outputs for one frame.
#[derive(Debug, Clone, Copy)]
pub struct RenderVars {
    /// Sampled texture features before view modulation, zero off the mesh.
    pub features: Var,
    pub gen: GeneratorVars,
}

/// Masked texture features of `frame`, before and after view modulation.
pub fn frame_features<'a>(
    tape: &Tape<'a, f32>,
    tex: &NeuralTexture,
    tb: &Bound,
    frame: &Frame,
) -> Result<(Var, Var)> {
    let f = tex.sample(tape, tb, &frame.uv.uv)?;
    let f = tape.mask_pixels(f, &frame.uv.mask)?;
    let m = sh_view_modulate(tape, f, view_direction(frame))?;
    Ok((f, m))
}

/// Full renderer forward pass on a tape. `prev` feeds the two-frame
/// variant; the current frame stands in when it is absent.
pub fn render_on_tape<'a>(
    tape: &Tape<'a, f32>,
    tex: &NeuralTexture,
    tb: &Bound,
    gen: &Generator,
    gb: &Bound,
    frame: &Frame,
    prev: Option<&Frame>,
) -> Result<RenderVars> {
    let (features, modulated) = frame_features(tape, tex, tb, frame)?;
    let input = if gen.config.two_frame_input {
        let other = match prev {
            Some(p) => frame_features(tape, tex, tb, p)?.1,
            None => modulated,
        };
        tape.concat(&[modulated, other])?
    } else {
        modulated
    };
    Ok(RenderVars { features, gen: gen.forward(tape, gb, input)? })
}

/// Inference: the generated image and the cache of `frame`.
pub fn generator_forward(
    tex: &NeuralTexture,
    gen: &Generator,
    frame: &Frame,
    prev: Option<&Frame>,
) -> Result<(Tensor<f32>, Cache)> {
    let tape = Tape::no_grad();
    let tb = tex.params.bind(&tape);
    let gb = gen.params.bind(&tape);
    let out = render_on_tape(&tape, tex, &tb, gen, &gb, frame, prev)?;
    let g = out.gen;
    let cache = Cache::from_frame(frame, tape.detach(g.c3), tape.detach(g.c4), tape.detach(g.c5));
    Ok((tape.detach(g.image), cache))
}
