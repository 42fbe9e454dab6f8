//! Sequential and parallel cache/warp scheduling with latency and throughput
//! instrumentation, plus a virtual-clock simulator of the same schedule.
//!
//! The parallel schedule follows a fixed protocol. A producer distributes
//! jobs to per-worker bounded queues. Every `num_warps`-th frame it waits for
//! a cache-completion token, rotates the cache role to the next worker and
//! posts a cache job there. Every frame gets a warp job on the worker that
//! held the cache role in the previous block, so the cache never leaves the
//! worker that produced it. A consumer restores frame order before emission.
//!
//! Before the clock starts every worker caches the first frame and posts a
//! token, which primes the completion barrier with one credit per worker.

mod exec;
mod report;
mod sim;
mod worker;

pub use exec::{measure_sync_overhead, run_parallel, run_sequential, Run, SyncOverhead};
pub use report::{JobRecord, TimingReport, TimingSummary, CSV_HEADER};
pub use sim::{simulate_schedule, simulate_sync_overhead, Simulation, TraceEvent, TraceKind};
pub use worker::{ModelWorker, SleepWorker, Worker};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a job asks a worker to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Cache,
    Warp,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Cache => "cache",
            Role::Warp => "warp",
        }
    }
}

/// A unit of work posted to a worker queue.
#[derive(Debug, Clone)]
pub struct Job<P> {
    pub index: usize,
    pub payload: P,
    pub role: Role,
    /// Milliseconds since the stream clock started. Warm-up jobs use 0.
    pub enqueue_ms: f64,
    pub warmup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One worker, cache refresh interleaved with warping on the same thread.
    Sequential,
    /// Producer, worker threads and consumer connected by queues.
    Parallel,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Mode::Sequential),
            "parallel" => Ok(Mode::Parallel),
            other => Err(Error::config(format!("unknown scheduler mode `{other}` (expected sequential or parallel)"))),
        }
    }
}

/// Per-job durations used by sleep workers and the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Durations {
    pub tg_ms: f64,
    pub tw_ms: f64,
    /// Delay between posting a job and the worker being able to start it.
    pub tsync_ms: f64,
}

impl Durations {
    /// Timings measured on the reference hardware.
    pub const REFERENCE: Durations = Durations { tg_ms: 47.02, tw_ms: 14.62, tsync_ms: 0.25 };

    pub fn validate(&self) -> Result<()> {
        if !(self.tg_ms > 0.0 && self.tw_ms > 0.0) || !self.tg_ms.is_finite() || !self.tw_ms.is_finite() {
            return Err(Error::config(format!(
                "durations must be positive: tg={} tw={}",
                self.tg_ms, self.tw_ms
            )));
        }
        if !(self.tsync_ms >= 0.0 && self.tsync_ms.is_finite()) {
            return Err(Error::config(format!("sync delay must be non-negative, got {}", self.tsync_ms)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub mode: Mode,
    pub n_workers: usize,
    pub num_warps: usize,
    /// Input rate in frames per second; `None` feeds frames as fast as the
    /// pipeline accepts them.
    pub input_fps: Option<f64>,
    /// Bound of each worker input queue; `None` uses `2 * num_warps`.
    pub queue_capacity: Option<usize>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { mode: Mode::Parallel, n_workers: 2, num_warps: 2, input_fps: None, queue_capacity: None }
    }
}

impl SchedulerConfig {
    pub fn sequential(num_warps: usize) -> Self {
        Self { mode: Mode::Sequential, n_workers: 1, num_warps, ..Self::default() }
    }

    pub fn parallel(n_workers: usize, num_warps: usize) -> Self {
        Self { mode: Mode::Parallel, n_workers, num_warps, ..Self::default() }
    }

    pub fn with_input_fps(mut self, fps: Option<f64>) -> Self {
        self.input_fps = fps;
        self
    }

    pub fn capacity(&self) -> usize {
        self.queue_capacity.unwrap_or(2 * self.num_warps)
    }

    /// Frames excluded from throughput and latency statistics.
    pub fn warmup_frames(&self) -> usize {
        self.num_warps * self.n_workers
    }

    pub(crate) fn period_ms(&self) -> Option<f64> {
        self.input_fps.map(|f| 1000.0 / f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_warps == 0 {
            return Err(Error::config("num_warps must be at least 1"));
        }
        if self.n_workers == 0 {
            return Err(Error::config("n_workers must be at least 1"));
        }
        if self.mode == Mode::Sequential && self.n_workers != 1 {
            return Err(Error::config(format!(
                "sequential mode runs on exactly one worker, got n_workers={}",
                self.n_workers
            )));
        }
        if self.capacity() == 0 {
            return Err(Error::config("queue capacity must be at least 1"));
        }
        if let Some(f) = self.input_fps {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::config(format!("input fps must be positive, got {f}")));
            }
        }
        Ok(())
    }
}

/// Jobs the producer posts for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dispatch {
    /// Worker receiving the cache job, when this frame starts a block.
    pub cache: Option<usize>,
    pub warp: usize,
    /// Post the warp job before the cache job. Only happens when one worker
    /// holds both roles, so the frame is warped from the previous cache.
    pub warp_first: bool,
}

/// Cache-role rotation shared by the threaded runner and the simulator.
#[derive(Debug, Clone)]
pub(crate) struct Rotation {
    n_workers: usize,
    num_warps: usize,
    cache_tid: usize,
}

impl Rotation {
    pub fn new(n_workers: usize, num_warps: usize) -> Self {
        Self { n_workers, num_warps, cache_tid: n_workers - 1 }
    }

    pub fn starts_block(&self, t: usize) -> bool {
        t.is_multiple_of(self.num_warps)
    }

    /// Advances to frame `t`. Call once per frame, in order.
    pub fn next(&mut self, t: usize) -> Dispatch {
        let n = self.n_workers;
        let cache = if self.starts_block(t) {
            self.cache_tid = (self.cache_tid + 1) % n;
            Some(self.cache_tid)
        } else {
            None
        };
        let warp = (self.cache_tid + n - 1) % n;
        Dispatch { cache, warp, warp_first: cache == Some(warp) }
    }
}
