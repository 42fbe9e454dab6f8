use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::proxy::head_forward;
use super::vec3;
use crate::numerics::sh_basis9;

/// Per-frame driving parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameParams {
    pub t: usize,
    /// Axis-angle rotation followed by translation.
    pub theta: [f64; 6],
    pub expr: Vec<f64>,
    /// Camera position.
    pub cam: [f64; 3],
}

impl FrameParams {
    /// SH code of the posed head's forward axis.
    pub fn h_obj(&self) -> [f64; 9] {
        sh_basis9(head_forward(&self.theta)).expect("rotation preserves length")
    }

    pub fn head_center(&self) -> [f64; 3] {
        [self.theta[3], self.theta[4], self.theta[5]]
    }
}

/// Motion amplitudes of the synthetic capture.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSpec {
    pub k: usize,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
    pub expression: f64,
    pub cam_base: [f64; 3],
    pub cam_offset: [f64; 3],
    /// Frequency range of the sinusoids in Hz.
    pub freq: (f64, f64),
}

impl Default for MotionSpec {
    fn default() -> Self {
        Self {
            k: 4,
            rotation: [0.18, 0.35, 0.08],
            translation: [0.08, 0.06, 0.05],
            expression: 1.2,
            cam_base: [0.0, 0.0, 3.2],
            cam_offset: [0.35, 0.2, 0.25],
            freq: (0.05, 0.35),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

fn curve(waves: &[Wave], tau: f64) -> f64 {
    waves.iter().map(|w| w.amp * (TAU * w.freq * tau + w.phase).sin()).sum()
}

/// Smooth seeded trajectory with the default motion spec.
pub fn generate_trajectory(seed: u64, n_frames: usize, fps: u32, jitter_sigma: f64) -> Result<Vec<FrameParams>> {
    generate_trajectory_with(&MotionSpec::default(), seed, n_frames, fps, jitter_sigma)
}

/// Each coordinate is a sum of three seeded sinusoids of time `t / fps`,
/// so trajectories at different frame rates sample the same curves.
pub fn generate_trajectory_with(
    spec: &MotionSpec,
    seed: u64,
    n_frames: usize,
    fps: u32,
    jitter_sigma: f64,
) -> Result<Vec<FrameParams>> {
    if fps != 30 && fps != 60 {
        return Err(Error::config(format!("trajectory fps must be 30 or 60, got {fps}")));
    }
    if n_frames == 0 {
        return Err(Error::config("trajectory needs at least one frame"));
    }
    if jitter_sigma.is_nan() || jitter_sigma < 0.0 {
        return Err(Error::config(format!("jitter sigma must be non-negative, got {jitter_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<f64> = spec
        .rotation
        .iter()
        .chain(&spec.translation)
        .copied()
        .chain(std::iter::repeat_n(spec.expression, spec.k))
        .chain(spec.cam_offset.iter().copied())
        .collect();
    let waves: Vec<Vec<Wave>> = amps
        .iter()
        .map(|&a| {
            (0..3)
                .map(|q| Wave {
                    amp: a / (q as f64 + 1.5),
                    freq: rng.gen_range(spec.freq.0..spec.freq.1),
                    phase: rng.gen_range(0.0..TAU),
                })
                .collect()
        })
        .collect();
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A09_E667_F3BC_C908);
    let noise = Normal::new(0.0, jitter_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut out = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let tau = t as f64 / fps as f64;
        let v: Vec<f64> = waves.iter().map(|w| curve(w, tau)).collect();
        let mut theta = [0.0; 6];
        theta.copy_from_slice(&v[..6]);
        let expr = v[6..6 + spec.k].to_vec();
        let mut cam = [0.0; 3];
        for i in 0..3 {
            cam[i] = spec.cam_base[i] + v[6 + spec.k + i];
        }
        if jitter_sigma > 0.0 {
            for x in theta.iter_mut().chain(cam.iter_mut()) {
                *x += noise.sample(&mut jitter_rng);
            }
        }
        out.push(FrameParams { t, theta, expr, cam });
    }
    Ok(out)
}

/// `params` with the head turned by an extra yaw (about the vertical axis)
/// applied after its own rotation.
pub fn with_yaw_offset(params: &FrameParams, yaw_rad: f64) -> FrameParams {
    let own = vec3::rotation([params.theta[0], params.theta[1], params.theta[2]]);
    let turned = vec3::mat_mul(&vec3::rotation([0.0, yaw_rad, 0.0]), &own);
    let aa = vec3::axis_angle(&turned);
    let mut out = params.clone();
    out.theta[..3].copy_from_slice(&aa);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(generate_trajectory(3, 50, 30, 0.0).unwrap(), generate_trajectory(3, 50, 30, 0.0).unwrap());
        assert_ne!(generate_trajectory(3, 50, 30, 0.0).unwrap(), generate_trajectory(4, 50, 30, 0.0).unwrap());
    }

    #[test]
    fn sixty_fps_subsamples_to_thirty() {
        let a = generate_trajectory(11, 200, 60, 0.0).unwrap();
        let b = generate_trajectory(11, 100, 30, 0.0).unwrap();
        for (i, f) in b.iter().enumerate() {
            let g = &a[2 * i];
            assert_eq!(g.theta, f.theta);
            assert_eq!(g.expr, f.expr);
            assert_eq!(g.cam, f.cam);
        }
    }

    #[test]
    fn yaw_offset_turns_forward_axis() {
        let p = FrameParams { t: 0, theta: [0.0; 6], expr: vec![0.0; 4], cam: [0.0, 0.0, 3.0] };
        let q = with_yaw_offset(&p, std::f64::consts::FRAC_PI_4);
        let f = head_forward(&q.theta);
        assert!((f[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((f[2] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let p = FrameParams { theta: [0.1, 0.2, -0.05, 0.01, 0.02, 0.03], ..p };
        let base = head_forward(&p.theta);
        let f = head_forward(&with_yaw_offset(&p, 0.3).theta);
        let r = vec3::mat_vec(&vec3::rotation([0.0, 0.3, 0.0]), base);
        for k in 0..3 {
            assert!((f[k] - r[k]).abs() < 1e-9);
        }
        assert_eq!(with_yaw_offset(&p, 0.3).theta[3..], p.theta[3..]);
    }

    #[test]
    fn rejects_bad_fps() {
        assert!(generate_trajectory(1, 10, 24, 0.0).is_err());
    }

    #[test]
    fn jitter_perturbs() {
        let a = generate_trajectory(5, 10, 30, 0.0).unwrap();
        let b = generate_trajectory(5, 10, 30, 0.01).unwrap();
        assert_ne!(a[3].theta, b[3].theta);
        assert_eq!(a[3].expr, b[3].expr);
    }
}
