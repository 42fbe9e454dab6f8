use crate::numerics::Tensor;

use super::proxy::{deform_and_pose, HeadProxy};
use super::raster::{rasterize, uv_from_fragments, Camera, Intrinsics, UvMap};
use super::shade::{shade_fragments, ShaderParams};
use super::stabilize::{Framing, StabilizerState};
use super::trajectory::FrameParams;
use super::vec3;

/// Fraction of the image width spanned by the landmark distance.
pub const LANDMARK_SPAN: f64 = 0.5;

/// A rendered training/evaluation sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub params: FrameParams,
    pub h_obj: [f64; 9],
    pub uv: UvMap,
    pub image: Tensor<f32>,
}

impl Frame {
    pub fn t(&self) -> usize {
        self.params.t
    }

    pub fn height(&self) -> usize {
        self.uv.height()
    }

    pub fn width(&self) -> usize {
        self.uv.width()
    }
}

/// Renders frame sequences with a stabilized virtual camera.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    pub proxy: HeadProxy,
    pub shader: ShaderParams,
    pub h: usize,
    pub w: usize,
}

impl SceneRenderer {
    pub fn new(proxy: HeadProxy, h: usize, w: usize) -> Self {
        Self { proxy, shader: ShaderParams::default(), h, w }
    }

    /// Raw framing of one posed mesh: landmark midpoint and camera distance
    /// over landmark distance.
    pub fn observe(&self, params: &FrameParams, verts: &[[f64; 3]]) -> Framing {
        let l = verts[self.proxy.landmark_left];
        let r = verts[self.proxy.landmark_right];
        let center = vec3::scale(vec3::add(l, r), 0.5);
        let span = vec3::norm(vec3::sub(l, r)).max(1e-9);
        Framing { center, scale: vec3::norm(vec3::sub(params.cam, center)) / span }
    }

    fn render_with(&self, params: &FrameParams, framing: Framing, verts: &[[f64; 3]]) -> Frame {
        let cam = Camera { position: params.cam, target: framing.center };
        let intr = Intrinsics::centered(LANDMARK_SPAN * self.w as f64 * framing.scale, self.h, self.w);
        let frags = rasterize(verts, &self.proxy.triangles, &cam, &intr, self.h, self.w);
        Frame {
            params: params.clone(),
            h_obj: params.h_obj(),
            uv: uv_from_fragments(&frags, &self.proxy),
            image: shade_fragments(&frags, verts, &self.proxy, &cam, &self.shader),
        }
    }

    /// Renders a trajectory in order, advancing one stabilizer.
    pub fn render_sequence(&self, track: &[FrameParams]) -> Vec<Frame> {
        let mut stab = StabilizerState::new();
        track
            .iter()
            .map(|p| {
                let verts = deform_and_pose(&self.proxy, &p.theta, &p.expr);
                let framing = stab.push(self.observe(p, &verts));
                self.render_with(p, framing, &verts)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::super::trajectory::generate_trajectory;
    use super::*;

    #[test]
    fn sequence_is_reproducible_and_framed() {
        let r = SceneRenderer::new(HeadProxy::default_head(), 32, 32);
        let track = generate_trajectory(1, 6, 30, 0.0).unwrap();
        let a = r.render_sequence(&track);
        let b = r.render_sequence(&track);
        assert_eq!(a, b);
        for f in &a {
            let cov = f.uv.coverage() as f64 / (32.0 * 32.0);
            assert!(cov > 0.15 && cov < 0.6, "coverage {cov}");
        }
    }
}
