use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::vec3::{self, V3};

/// Deformable stand-in for a face model: a UV-mapped triangle mesh with
/// linear expression blendshapes.
#[derive(Debug, Clone)]
pub struct HeadProxy {
    pub base_vertices: Vec<V3>,
    pub triangles: Vec<[usize; 3]>,
    pub uv_coords: Vec<[f64; 2]>,
    /// `k` displacement fields, one offset per vertex.
    pub blendshapes: Vec<Vec<V3>>,
    pub landmark_left: usize,
    pub landmark_right: usize,
    /// Canonical representative of each vertex among position duplicates
    /// (poles and the texture seam), used to share normals.
    pub(crate) weld: Vec<usize>,
}

impl HeadProxy {
    pub fn new(
        base_vertices: Vec<V3>,
        triangles: Vec<[usize; 3]>,
        uv_coords: Vec<[f64; 2]>,
        blendshapes: Vec<Vec<V3>>,
        landmark_left: usize,
        landmark_right: usize,
    ) -> Result<Self> {
        let k = base_vertices.len();
        if uv_coords.len() != k {
            return Err(Error::config(format!("{} uv coordinates for {k} vertices", uv_coords.len())));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= k)) {
            return Err(Error::config(format!("triangle {t:?} indexes past {k} vertices")));
        }
        if uv_coords.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::config("uv coordinates must lie in [0, 1]"));
        }
        if let Some(b) = blendshapes.iter().find(|b| b.len() != k) {
            return Err(Error::config(format!("blendshape with {} offsets for {k} vertices", b.len())));
        }
        if landmark_left >= k || landmark_right >= k {
            return Err(Error::config("landmark index out of range"));
        }
        let weld = (0..k)
            .map(|i| {
                (0..i)
                    .find(|&j| vec3::norm(vec3::sub(base_vertices[i], base_vertices[j])) < 1e-9)
                    .unwrap_or(i)
            })
            .collect();
        Ok(Self { base_vertices, triangles, uv_coords, blendshapes, landmark_left, landmark_right, weld })
    }

    /// Ellipsoidal grid sphere with `rings x segments` quads (the seam
    /// column and pole rows are duplicated so UVs stay continuous) and `k`
    /// smooth expression fields.
    ///
    /// The head faces `+z`, `+y` is up, and the seam sits at the back.
    pub fn grid_sphere(rings: usize, segments: usize, k: usize) -> Result<Self> {
        if rings < 2 || segments < 4 || !segments.is_multiple_of(2) || !rings.is_multiple_of(2) {
            return Err(Error::config(format!("grid sphere needs even rings >= 2 and segments >= 4, got {rings}x{segments}")));
        }
        let radii = [0.85, 1.0, 0.9];
        let (nr, ns) = (rings + 1, segments + 1);
        let mut verts = Vec::with_capacity(nr * ns);
        let mut uvs = Vec::with_capacity(nr * ns);
        let mut angles = Vec::with_capacity(nr * ns);
        for i in 0..nr {
            let polar = PI * i as f64 / rings as f64;
            for j in 0..ns {
                let azimuth = 2.0 * PI * j as f64 / segments as f64;
                let (sp, cp) = polar.sin_cos();
                let (sa, ca) = azimuth.sin_cos();
                verts.push([radii[0] * sp * sa, radii[1] * cp, -radii[2] * sp * ca]);
                uvs.push([j as f64 / segments as f64, i as f64 / rings as f64]);
                angles.push((polar, azimuth));
            }
        }
        let mut tris = Vec::with_capacity(2 * rings * segments);
        for i in 0..rings {
            for j in 0..segments {
                let a = i * ns + j;
                let (b, c, d) = (a + 1, a + ns, a + ns + 1);
                tris.push([a, c, b]);
                tris.push([b, c, d]);
            }
        }
        let amplitude = 0.15;
        let blendshapes = (0..k)
            .map(|q| {
                let freq = (q / 2 + 1) as f64;
                let phase = 0.7 * q as f64;
                verts
                    .iter()
                    .zip(&angles)
                    .map(|(&v, &(polar, azimuth))| {
                        let n = vec3::normalize([v[0] / radii[0], v[1] / radii[1], v[2] / radii[2]]);
                        let g = if q % 2 == 0 {
                            polar.sin() * (freq * azimuth + phase).sin()
                        } else {
                            polar.sin() * (freq * polar + phase).cos()
                        };
                        vec3::scale(n, amplitude * g)
                    })
                    .collect()
            })
            .collect();
        let eq = rings / 2;
        let left = eq * ns + segments / 4 * 3;
        let right = eq * ns + segments / 4;
        Self::new(verts, tris, uvs, blendshapes, left, right)
    }

    /// The default 20x20 proxy with four expression dimensions.
    pub fn default_head() -> Self {
        Self::grid_sphere(20, 20, 4).expect("valid default proxy")
    }

    pub fn num_vertices(&self) -> usize {
        self.base_vertices.len()
    }

    pub fn num_expressions(&self) -> usize {
        self.blendshapes.len()
    }
}

/// Limit applied to each expression coefficient.
pub const EXPR_LIMIT: f64 = 3.0;

/// Blends expressions into the base mesh, then rotates by the axis-angle
/// `theta[0..3]` and translates by `theta[3..6]`.
pub fn deform_and_pose(proxy: &HeadProxy, theta: &[f64; 6], expr: &[f64]) -> Vec<V3> {
    let rot = vec3::rotation([theta[0], theta[1], theta[2]]);
    let shift = [theta[3], theta[4], theta[5]];
    (0..proxy.num_vertices())
        .map(|i| {
            let mut v = proxy.base_vertices[i];
            for (b, &e) in proxy.blendshapes.iter().zip(expr) {
                v = vec3::add(v, vec3::scale(b[i], e.clamp(-EXPR_LIMIT, EXPR_LIMIT)));
            }
            vec3::add(vec3::mat_vec(&rot, v), shift)
        })
        .collect()
}

/// Unit forward axis of the head after rotating by `theta[0..3]`.
pub fn head_forward(theta: &[f64; 6]) -> V3 {
    vec3::mat_vec(&vec3::rotation([theta[0], theta[1], theta[2]]), [0.0, 0.0, 1.0])
}

/// Smooth per-vertex normals of a posed mesh, shared across welded
/// duplicates.
pub(crate) fn vertex_normals(proxy: &HeadProxy, verts: &[V3]) -> Vec<V3> {
    let mut acc = vec![[0.0; 3]; verts.len()];
    for t in &proxy.triangles {
        let n = vec3::cross(vec3::sub(verts[t[1]], verts[t[0]]), vec3::sub(verts[t[2]], verts[t[0]]));
        for &i in t {
            let w = proxy.weld[i];
            acc[w] = vec3::add(acc[w], n);
        }
    }
    (0..verts.len()).map(|i| vec3::normalize(acc[proxy.weld[i]])).collect()
}
