use std::time::Duration;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::renderer::{generator_forward, Cache};
use crate::scene::Frame;
use crate::training::Models;
use crate::warp::{explicit_warp_baseline, warp_forward};

/// An execution context holding its own cache.
pub trait Worker<I>: Send {
    type Output: Send;

    /// Runs the full generator on `input` and keeps its cache.
    fn cache(&mut self, input: &I) -> Result<()>;

    /// Synthesizes `input` from the resident cache.
    fn warp(&mut self, input: &I) -> Result<Self::Output>;
}

/// Dummy workload that sleeps for fixed durations.
#[derive(Debug, Clone, Copy)]
pub struct SleepWorker {
    pub cache_ms: f64,
    pub warp_ms: f64,
}

impl SleepWorker {
    pub fn new(cache_ms: f64, warp_ms: f64) -> Self {
        Self { cache_ms, warp_ms }
    }
}

fn sleep_ms(ms: f64) {
    if ms > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(ms / 1000.0));
    }
}

impl<I> Worker<I> for SleepWorker {
    type Output = ();

    fn cache(&mut self, _: &I) -> Result<()> {
        sleep_ms(self.cache_ms);
        Ok(())
    }

    fn warp(&mut self, _: &I) -> Result<()> {
        sleep_ms(self.warp_ms);
        Ok(())
    }
}

/// Runs the trained renderer and warp head.
#[derive(Debug)]
pub struct ModelWorker<'m> {
    models: &'m Models,
    cache: Option<Cache>,
}

impl<'m> ModelWorker<'m> {
    pub fn new(models: &'m Models) -> Self {
        Self { models, cache: None }
    }

    pub fn resident(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }
}

impl Worker<Frame> for ModelWorker<'_> {
    type Output = Tensor<f32>;

    fn cache(&mut self, frame: &Frame) -> Result<()> {
        let m = self.models;
        let (_, cache) = generator_forward(&m.texture, &m.generator, frame, None)?;
        self.cache = Some(cache);
        Ok(())
    }

    fn warp(&mut self, frame: &Frame) -> Result<Tensor<f32>> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::Scheduler("warp job before any cache".into()))?;
        let m = self.models;
        if m.warp.config.flags.exwarp {
            explicit_warp_baseline(&m.warp, &m.texture, cache, frame)
        } else {
            warp_forward(&m.warp, cache, frame)
        }
    }
}
