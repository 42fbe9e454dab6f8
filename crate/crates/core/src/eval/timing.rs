use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::renderer::{generator_forward, Cache};
use crate::scene::{DatasetSpec, Frame};
use crate::scheduler::Durations;
use crate::training::Models;
use crate::warp::{explicit_warp_baseline, warp_forward};

/// Generator images and caches for every frame.
pub fn generator_pass(models: &Models, frames: &[Frame]) -> Result<(Vec<Tensor<f32>>, Vec<Cache>)> {
    let mut images = Vec::with_capacity(frames.len());
    let mut caches = Vec::with_capacity(frames.len());
    for f in frames {
        let (img, cache) = generator_forward(&models.texture, &models.generator, f, None)?;
        images.push(img);
        caches.push(cache);
    }
    Ok((images, caches))
}

/// Warps `frame` from `cache` with whichever head variant `models` holds.
pub fn warp_image(models: &Models, cache: &Cache, frame: &Frame) -> Result<Tensor<f32>> {
    if models.warp.config.flags.exwarp {
        explicit_warp_baseline(&models.warp, &models.texture, cache, frame)
    } else {
        warp_forward(&models.warp, cache, frame)
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median wall times of the two networks on the same machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkTimings {
    pub generator_ms: f64,
    pub warp_ms: f64,
    pub reps: usize,
}

impl NetworkTimings {
    pub fn speedup(&self) -> f64 {
        self.generator_ms / self.warp_ms
    }

    /// Scheduler durations with no synchronization delay.
    pub fn durations(&self) -> Durations {
        Durations { tg_ms: self.generator_ms, tw_ms: self.warp_ms, tsync_ms: 0.0 }
    }
}

/// Times `generator_forward` and the warp head over `reps` frame pairs,
/// after one untimed pass of each.
pub fn time_networks(models: &Models, frames: &[Frame], reps: usize) -> Result<NetworkTimings> {
    if frames.len() < 2 || reps == 0 {
        return Err(Error::usage("timing needs at least two frames and one repetition"));
    }
    let (_, cache) = generator_forward(&models.texture, &models.generator, &frames[0], None)?;
    warp_image(models, &cache, &frames[1])?;
    let mut g = Vec::with_capacity(reps);
    let mut w = Vec::with_capacity(reps);
    for r in 0..reps {
        let a = &frames[r % (frames.len() - 1)];
        let b = &frames[r % (frames.len() - 1) + 1];
        let t0 = Instant::now();
        let (_, cache) = generator_forward(&models.texture, &models.generator, a, None)?;
        g.push(t0.elapsed().as_secs_f64() * 1000.0);
        let t0 = Instant::now();
        warp_image(models, &cache, b)?;
        w.push(t0.elapsed().as_secs_f64() * 1000.0);
    }
    Ok(NetworkTimings { generator_ms: median(&mut g), warp_ms: median(&mut w), reps })
}

/// Median per-frame time of rasterizing and shading `n` frames of `spec`.
/// Reported apart from network latency.
pub fn time_rasterization(spec: &DatasetSpec, n: usize) -> Result<f64> {
    let spec = DatasetSpec { frames: n.max(1), ..spec.clone() };
    let track = spec.trajectory()?;
    let renderer = spec.renderer()?;
    let mut times: Vec<f64> = track
        .iter()
        .map(|p| {
            let t0 = Instant::now();
            let _ = renderer.render_sequence(std::slice::from_ref(p));
            t0.elapsed().as_secs_f64() * 1000.0
        })
        .collect();
    Ok(median(&mut times))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }
}
