use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Mode, Role, SchedulerConfig};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "frame,role,worker,enqueue_ms,emit_ms,latency_ms,cache_frame";

/// Timing of one executed job. Times are milliseconds on the stream clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub frame: usize,
    pub role: Role,
    pub worker: usize,
    /// Arrival of the viewpoint that created the job.
    pub enqueue_ms: f64,
    pub start_ms: f64,
    pub end_ms: f64,
    /// Display time for warp jobs, completion time for cache jobs.
    pub emit_ms: f64,
    pub latency_ms: f64,
    /// Frame whose cache the warp used.
    pub cache_frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub mode: Mode,
    pub n_workers: usize,
    pub num_warps: usize,
    pub frames: usize,
    pub fps: f64,
    pub latency_mean_ms: f64,
    pub latency_median_ms: f64,
    pub latency_p95_ms: f64,
    pub sync_overhead_ms: Option<f64>,
    pub order_violations: usize,
    pub mean_warp_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub config: SchedulerConfig,
    /// Warp jobs in frame order followed by cache jobs in frame order.
    pub jobs: Vec<JobRecord>,
    pub fps: f64,
    pub sync_overhead_ms: Option<f64>,
    /// Emitted positions holding the wrong frame, plus missing frames.
    pub order_violations: usize,
}

impl TimingReport {
    pub(crate) fn build(config: &SchedulerConfig, mut jobs: Vec<JobRecord>, emitted: &[usize], n_frames: usize) -> Self {
        jobs.sort_by_key(|j| (j.role == Role::Cache, j.frame));
        let mut order_violations = emitted.iter().enumerate().filter(|(i, &f)| *i != f).count();
        order_violations += n_frames.abs_diff(emitted.len());
        let emits: Vec<f64> = jobs.iter().filter(|j| j.role == Role::Warp).map(|j| j.emit_ms).collect();
        let fps = steady_fps(&emits, config.warmup_frames(), config.num_warps);
        Self { config: config.clone(), jobs, fps, sync_overhead_ms: None, order_violations }
    }

    pub fn empty(config: &SchedulerConfig) -> Self {
        Self::build(config, Vec::new(), &[], 0)
    }

    pub fn warp_jobs(&self) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(|j| j.role == Role::Warp)
    }

    pub fn cache_jobs(&self) -> impl Iterator<Item = &JobRecord> {
        self.jobs.iter().filter(|j| j.role == Role::Cache)
    }

    pub fn n_frames(&self) -> usize {
        self.warp_jobs().count()
    }

    /// Per-frame motion-to-photon latency in frame order.
    pub fn latencies(&self) -> Vec<f64> {
        self.warp_jobs().map(|j| j.latency_ms).collect()
    }

    /// Latencies after the warm-up frames; all latencies if none remain.
    pub fn steady_latencies(&self) -> Vec<f64> {
        let all = self.latencies();
        let w = self.config.warmup_frames();
        if all.len() > w {
            all[w..].to_vec()
        } else {
            all
        }
    }

    /// Frames between each warped frame and the cache it used.
    pub fn warp_distances(&self) -> Vec<Option<usize>> {
        self.warp_jobs().map(|j| j.cache_frame.map(|c| j.frame.saturating_sub(c))).collect()
    }

    pub fn summary(&self) -> TimingSummary {
        let lat = self.steady_latencies();
        let dist: Vec<f64> = self.warp_distances().into_iter().flatten().map(|d| d as f64).collect();
        TimingSummary {
            mode: self.config.mode,
            n_workers: self.config.n_workers,
            num_warps: self.config.num_warps,
            frames: self.n_frames(),
            fps: self.fps,
            latency_mean_ms: mean(&lat),
            latency_median_ms: quantile(&lat, 0.5),
            latency_p95_ms: quantile(&lat, 0.95),
            sync_overhead_ms: self.sync_overhead_ms,
            order_violations: self.order_violations,
            mean_warp_distance: mean(&dist),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for j in &self.jobs {
            let cache = j.cache_frame.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{:.4},{:.4},{}",
                j.frame,
                j.role.as_str(),
                j.worker,
                j.enqueue_ms,
                j.emit_ms,
                j.latency_ms,
                cache
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::file(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::file(path, e))
    }
}

/// Frames per second over whole blocks after the warm-up frames.
pub(crate) fn steady_fps(emits: &[f64], warmup: usize, num_warps: usize) -> f64 {
    if emits.len() < 2 {
        return 0.0;
    }
    let (first, span) = if emits.len() > warmup + num_warps {
        (warmup, (emits.len() - 1 - warmup) / num_warps * num_warps)
    } else {
        (0, emits.len() - 1)
    };
    let dt = emits[first + span] - emits[first];
    if dt <= 0.0 {
        return 0.0;
    }
    span as f64 * 1000.0 / dt
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Linear-interpolated quantile.
pub(crate) fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
