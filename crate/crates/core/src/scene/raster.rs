use crate::numerics::Tensor;

use super::proxy::HeadProxy;
use super::vec3::{self, V3};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Principal point at the image center.
    pub fn centered(focal: f64, h: usize, w: usize) -> Self {
        Self { focal, cx: w as f64 / 2.0, cy: h as f64 / 2.0 }
    }
}

/// Look-at camera with `+y` world up. Image `x` grows to the right and
/// image `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: V3,
    pub target: V3,
}

impl Camera {
    fn basis(&self) -> (V3, V3, V3) {
        let fwd = vec3::normalize(vec3::sub(self.target, self.position));
        let mut right = vec3::cross(fwd, [0.0, 1.0, 0.0]);
        if vec3::norm(right) < 1e-9 {
            right = [1.0, 0.0, 0.0];
        }
        let right = vec3::normalize(right);
        let up = vec3::cross(right, fwd);
        (right, up, fwd)
    }

    /// Pixel coordinates and view depth of a world point.
    pub fn project(&self, intr: &Intrinsics, p: V3) -> (f64, f64, f64) {
        let (right, up, fwd) = self.basis();
        let d = vec3::sub(p, self.position);
        let z = vec3::dot(d, fwd);
        (intr.cx + intr.focal * vec3::dot(d, right) / z, intr.cy - intr.focal * vec3::dot(d, up) / z, z)
    }
}

const NEAR: f64 = 1e-3;

/// Per-pixel visible triangle and perspective-correct barycentric weights.
#[derive(Debug, Clone)]
pub(crate) struct Fragments {
    pub h: usize,
    pub w: usize,
    pub tri: Vec<Option<usize>>,
    pub weights: Vec<[f64; 3]>,
}

pub(crate) fn rasterize(
    verts: &[V3],
    triangles: &[[usize; 3]],
    cam: &Camera,
    intr: &Intrinsics,
    h: usize,
    w: usize,
) -> Fragments {
    let proj: Vec<(f64, f64, f64)> = verts.iter().map(|&v| cam.project(intr, v)).collect();
    let mut inv_depth = vec![0.0f64; h * w];
    let mut frags = Fragments { h, w, tri: vec![None; h * w], weights: vec![[0.0; 3]; h * w] };
    for (ti, t) in triangles.iter().enumerate() {
        let p = [proj[t[0]], proj[t[1]], proj[t[2]]];
        if p.iter().any(|q| q.2.is_nan() || q.2 <= NEAR) {
            continue;
        }
        let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        if area.abs() < 1e-12 {
            continue;
        }
        let xmin = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let xmax = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let ymin = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let ymax = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (xmin - 0.5).ceil().max(0.0) as usize;
        let y0 = (ymin - 0.5).ceil().max(0.0) as usize;
        let x1 = ((xmax - 0.5).floor() + 1.0).clamp(0.0, w as f64) as usize;
        let y1 = ((ymax - 0.5).floor() + 1.0).clamp(0.0, h as f64) as usize;
        for py in y0..y1 {
            let sy = py as f64 + 0.5;
            for px in x0..x1 {
                let sx = px as f64 + 0.5;
                let edge = |a: (f64, f64, f64), b: (f64, f64, f64)| (b.0 - a.0) * (sy - a.1) - (sx - a.0) * (b.1 - a.1);
                let l = [edge(p[1], p[2]) / area, edge(p[2], p[0]) / area, edge(p[0], p[1]) / area];
                if l.iter().any(|&v| v < -1e-9) {
                    continue;
                }
                let persp = [l[0] / p[0].2, l[1] / p[1].2, l[2] / p[2].2];
                let iz = persp[0] + persp[1] + persp[2];
                let idx = py * w + px;
                if frags.tri[idx].is_some() && iz <= inv_depth[idx] {
                    continue;
                }
                inv_depth[idx] = iz;
                frags.tri[idx] = Some(ti);
                frags.weights[idx] = [persp[0] / iz, persp[1] / iz, persp[2] / iz];
            }
        }
    }
    frags
}

/// Rasterized texture coordinates (`2 x H x W`, channel 0 = `u`) and the
/// coverage mask (`1 x H x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct UvMap {
    pub uv: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl UvMap {
    pub fn height(&self) -> usize {
        self.uv.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.uv.shape()[2]
    }

    pub fn coverage(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

/// Z-buffered UV rasterization with perspective-correct interpolation.
/// Uncovered pixels get `uv = (0, 0)` and mask 0.
pub fn rasterize_uv(verts: &[V3], proxy: &HeadProxy, cam: &Camera, intr: &Intrinsics, h: usize, w: usize) -> UvMap {
    let frags = rasterize(verts, &proxy.triangles, cam, intr, h, w);
    uv_from_fragments(&frags, proxy)
}

pub(crate) fn uv_from_fragments(frags: &Fragments, proxy: &HeadProxy) -> UvMap {
    let plane = frags.h * frags.w;
    let mut uv = vec![0.0f32; 2 * plane];
    let mut mask = vec![0.0f32; plane];
    for i in 0..plane {
        if let Some(t) = frags.tri[i] {
            let tri = proxy.triangles[t];
            let wts = frags.weights[i];
            let mut c = [0.0; 2];
            for k in 0..3 {
                c[0] += wts[k] * proxy.uv_coords[tri[k]][0];
                c[1] += wts[k] * proxy.uv_coords[tri[k]][1];
            }
            uv[i] = c[0].clamp(0.0, 1.0) as f32;
            uv[plane + i] = c[1].clamp(0.0, 1.0) as f32;
            mask[i] = 1.0;
        }
    }
    UvMap {
        uv: Tensor::new(vec![2, frags.h, frags.w], uv).expect("sized"),
        mask: Tensor::new(vec![1, frags.h, frags.w], mask).expect("sized"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A `2 x 2` world-unit quad at `z = 0` facing a camera on `+z`,
    /// with focal length chosen so it exactly fills the image.
    fn facing_quad(h: usize, w: usize) -> (HeadProxy, Camera, Intrinsics) {
        let verts = vec![[-1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0]];
        let uvs = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let proxy = HeadProxy::new(verts, vec![[0, 2, 1], [1, 2, 3]], uvs, vec![], 0, 1).unwrap();
        let dist = 3.0;
        let cam = Camera { position: [0.0, 0.0, dist], target: [0.0; 3] };
        let intr = Intrinsics { focal: dist * w as f64 / 2.0, cx: w as f64 / 2.0, cy: h as f64 / 2.0 };
        (proxy, cam, intr)
    }

    #[test]
    fn facing_quad_uv_matches_pixel_centers() {
        let (h, w) = (24, 24);
        let (proxy, cam, intr) = facing_quad(h, w);
        let m = rasterize_uv(&proxy.base_vertices, &proxy, &cam, &intr, h, w);
        let plane = h * w;
        let mut worst: f64 = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                assert_eq!(m.mask.data()[i], 1.0);
                worst = worst.max((m.uv.data()[i] as f64 - (x as f64 + 0.5) / w as f64).abs());
                worst = worst.max((m.uv.data()[plane + i] as f64 - (y as f64 + 0.5) / h as f64).abs());
            }
        }
        assert!(worst < 1.0 / (2.0 * h.min(w) as f64), "worst {worst}");
    }

    #[test]
    fn camera_facing_away_sees_nothing() {
        let p = HeadProxy::default_head();
        let cam = Camera { position: [0.0, 0.0, 3.0], target: [0.0, 0.0, 6.0] };
        let m = rasterize_uv(&p.base_vertices, &p, &cam, &Intrinsics::centered(40.0, 32, 32), 32, 32);
        assert_eq!(m.coverage(), 0);
        assert!(m.uv.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nearer_triangle_wins() {
        let verts = vec![
            [-1.0, -1.0, 0.0],
            [1.0, -1.0, 0.0],
            [0.0, 1.0, 0.0],
            [-1.0, -1.0, 0.5],
            [1.0, -1.0, 0.5],
            [0.0, 1.0, 0.5],
        ];
        let uvs = vec![[0.1, 0.1], [0.1, 0.1], [0.1, 0.1], [0.9, 0.9], [0.9, 0.9], [0.9, 0.9]];
        // Far triangle listed last so it is drawn after the near one.
        let proxy = HeadProxy::new(verts, vec![[3, 4, 5], [0, 1, 2]], uvs, vec![], 0, 1).unwrap();
        let cam = Camera { position: [0.0, 0.0, 3.0], target: [0.0; 3] };
        let m = rasterize_uv(&proxy.base_vertices, &proxy, &cam, &Intrinsics::centered(20.0, 32, 32), 32, 32);
        assert!(m.coverage() > 0);
        for i in 0..32 * 32 {
            if m.mask.data()[i] > 0.0 {
                assert!((m.uv.data()[i] - 0.9).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reproducible() {
        let p = HeadProxy::default_head();
        let cam = Camera { position: [0.3, 0.2, 3.0], target: [0.0; 3] };
        let intr = Intrinsics::centered(50.0, 32, 32);
        let a = rasterize_uv(&p.base_vertices, &p, &cam, &intr, 32, 32);
        let b = rasterize_uv(&p.base_vertices, &p, &cam, &intr, 32, 32);
        assert_eq!(a, b);
        assert!(a.coverage() > 100);
    }
}
