use crate::numerics::Tensor;

use super::proxy::{vertex_normals, HeadProxy};
use super::raster::{rasterize, Camera, Fragments, Intrinsics};
use super::vec3::{self, V3};

/// Surface color source of the reference shader.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Albedo {
    /// Checkerboard mixed with a per-cell hash color.
    Procedural { cells: usize },
    Constant([f64; 3]),
}

/// Fixed lighting of the ground-truth renderer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShaderParams {
    /// Unit direction toward the light.
    pub light_dir: V3,
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
    pub background: [f64; 3],
    pub albedo: Albedo,
}

impl Default for ShaderParams {
    fn default() -> Self {
        Self {
            light_dir: vec3::normalize([0.4, 0.6, 0.7]),
            ambient: 0.25,
            diffuse: 0.75,
            specular: 0.45,
            shininess: 20.0,
            background: [0.08, 0.08, 0.1],
            albedo: Albedo::Procedural { cells: 8 },
        }
    }
}

fn hash01(a: u64, b: u64, c: u64) -> f64 {
    let mut x = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ c.wrapping_mul(0x1656_67B1_9E37_79F9);
    x ^= x >> 33;
    x = x.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    x ^= x >> 33;
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Albedo at texture coordinate `uv`.
pub fn albedo(kind: &Albedo, uv: [f64; 2]) -> [f64; 3] {
    match *kind {
        Albedo::Constant(c) => c,
        Albedo::Procedural { cells } => {
            let cu = ((uv[0] * cells as f64) as usize).min(cells - 1);
            let cv = ((uv[1] * cells as f64) as usize).min(cells - 1);
            let checker = ((cu + cv) % 2) as f64;
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                *o = 0.2 + 0.45 * checker + 0.35 * hash01(cu as u64, cv as u64, c as u64);
            }
            out
        }
    }
}

pub(crate) fn shade_fragments(
    frags: &Fragments,
    verts: &[V3],
    proxy: &HeadProxy,
    cam: &Camera,
    params: &ShaderParams,
) -> Tensor<f32> {
    let normals = vertex_normals(proxy, verts);
    let plane = frags.h * frags.w;
    let mut img = vec![0.0f32; 3 * plane];
    let l = vec3::normalize(params.light_dir);
    for i in 0..plane {
        let rgb = match frags.tri[i] {
            None => params.background,
            Some(t) => {
                let tri = proxy.triangles[t];
                let wts = frags.weights[i];
                let mut pos = [0.0; 3];
                let mut n = [0.0; 3];
                let mut uv = [0.0; 2];
                for k in 0..3 {
                    pos = vec3::add(pos, vec3::scale(verts[tri[k]], wts[k]));
                    n = vec3::add(n, vec3::scale(normals[tri[k]], wts[k]));
                    uv[0] += wts[k] * proxy.uv_coords[tri[k]][0];
                    uv[1] += wts[k] * proxy.uv_coords[tri[k]][1];
                }
                let view = vec3::normalize(vec3::sub(cam.position, pos));
                let mut n = vec3::normalize(n);
                if vec3::dot(n, view) < 0.0 {
                    n = vec3::scale(n, -1.0);
                }
                let ndl = vec3::dot(n, l);
                let lambert = ndl.max(0.0);
                let refl = vec3::sub(vec3::scale(n, 2.0 * ndl), l);
                let spec = if params.specular > 0.0 && ndl > 0.0 {
                    params.specular * vec3::dot(refl, view).max(0.0).powf(params.shininess)
                } else {
                    0.0
                };
                let a = albedo(&params.albedo, uv);
                let mut c = [0.0; 3];
                for k in 0..3 {
                    c[k] = (a[k] * (params.ambient + params.diffuse * lambert) + spec).clamp(0.0, 1.0);
                }
                c
            }
        };
        for c in 0..3 {
            img[c * plane + i] = rgb[c] as f32;
        }
    }
    Tensor::new(vec![3, frags.h, frags.w], img).expect("sized")
}

/// Ground-truth image: procedural albedo under Lambert plus specular
/// lighting, constant background.
pub fn reference_render(
    verts: &[V3],
    proxy: &HeadProxy,
    cam: &Camera,
    intr: &Intrinsics,
    h: usize,
    w: usize,
    params: &ShaderParams,
) -> Tensor<f32> {
    let frags = rasterize(verts, &proxy.triangles, cam, intr, h, w);
    shade_fragments(&frags, verts, proxy, cam, params)
}

#[cfg(test)]
mod tests {
    use super::super::raster::rasterize_uv;
    use super::*;

    fn setup() -> (HeadProxy, Camera, Intrinsics) {
        let p = HeadProxy::default_head();
        let cam = Camera { position: [0.2, 0.1, 3.2], target: [0.0; 3] };
        (p, cam, Intrinsics::centered(48.0, 32, 32))
    }

    #[test]
    fn lambert_only_on_facing_quad() {
        let verts = vec![[-1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [1.0, -1.0, 0.0]];
        let uvs = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let proxy = HeadProxy::new(verts.clone(), vec![[0, 2, 1], [1, 2, 3]], uvs, vec![], 0, 1).unwrap();
        let cam = Camera { position: [0.0, 0.0, 3.0], target: [0.0; 3] };
        let params = ShaderParams {
            light_dir: [0.0, 0.0, 1.0],
            ambient: 0.0,
            diffuse: 0.8,
            specular: 0.0,
            albedo: Albedo::Constant([1.0; 3]),
            ..ShaderParams::default()
        };
        let img = reference_render(&verts, &proxy, &cam, &Intrinsics::centered(20.0, 16, 16), 16, 16, &params);
        let center = 8 * 16 + 8;
        for c in 0..3 {
            assert!((img.data()[c * 256 + center] - 0.8).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let (p, cam, intr) = setup();
        let a = reference_render(&p.base_vertices, &p, &cam, &intr, 32, 32, &ShaderParams::default());
        let b = reference_render(&p.base_vertices, &p, &cam, &intr, 32, 32, &ShaderParams::default());
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn coverage_matches_foreground() {
        let (p, cam, intr) = setup();
        let params = ShaderParams { background: [2.0; 3], ..ShaderParams::default() };
        let img = reference_render(&p.base_vertices, &p, &cam, &intr, 32, 32, &params);
        let m = rasterize_uv(&p.base_vertices, &p, &cam, &intr, 32, 32);
        for i in 0..32 * 32 {
            let fg = img.data()[i] < 1.5;
            assert_eq!(fg, m.mask.data()[i] > 0.0);
        }
    }

    #[test]
    fn camera_motion_changes_only_head_pixels() {
        let (p, cam, intr) = setup();
        let cam2 = Camera { position: [-0.3, 0.0, 3.1], ..cam };
        let params = ShaderParams::default();
        let a = reference_render(&p.base_vertices, &p, &cam, &intr, 32, 32, &params);
        let b = reference_render(&p.base_vertices, &p, &cam2, &intr, 32, 32, &params);
        let ma = rasterize_uv(&p.base_vertices, &p, &cam, &intr, 32, 32);
        let mb = rasterize_uv(&p.base_vertices, &p, &cam2, &intr, 32, 32);
        let plane = 32 * 32;
        let mut changed = 0;
        for i in 0..plane {
            let diff = (0..3).any(|c| a.data()[c * plane + i] != b.data()[c * plane + i]);
            if diff {
                changed += 1;
                assert!(ma.mask.data()[i] > 0.0 || mb.mask.data()[i] > 0.0);
            }
        }
        assert!(changed > 0);
    }
}
