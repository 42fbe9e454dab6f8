use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::renderer::{generator_forward, Cache};
use crate::scene::{with_yaw_offset, Dataset, DatasetSpec, Frame};
use crate::scheduler::{simulate_schedule, Durations, SchedulerConfig, TimingReport, TimingSummary};
use crate::training::Models;

use super::metrics::{compute_metrics, MetricsResult};
use super::timing::warp_image;

/// How the test segment is streamed and scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Protocol {
    /// Every frame at the dataset rate, no timing constraint.
    Offline,
    /// The test window at 30 fps.
    Online30,
    /// The test window at 60 fps.
    Online60,
    /// Test poses turned by extra yaw with a neutral expression.
    NovelView,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Offline => "offline",
            Protocol::Online30 => "online-30",
            Protocol::Online60 => "online-60",
            Protocol::NovelView => "novel-view",
        }
    }

    fn native_fps(&self) -> Option<u32> {
        match self {
            Protocol::Online30 => Some(30),
            Protocol::Online60 => Some(60),
            _ => None,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Protocol::Offline),
            "online-30" => Ok(Protocol::Online30),
            "online-60" => Ok(Protocol::Online60),
            "novel-view" => Ok(Protocol::NovelView),
            _ => Err(Error::config(format!(
                "unknown protocol `{s}` (expected offline, online-30, online-60 or novel-view)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub num_warps: usize,
    /// One worker evaluates the sequential schedule, more the parallel one.
    pub n_workers: usize,
    /// Network durations that set the pipeline capacity for online drops.
    pub durations: Durations,
    /// Drop frames the pipeline cannot keep up with in online protocols.
    pub drop_frames: bool,
    /// Trailing fraction of the capture held out for testing.
    pub test_fraction: f64,
    pub yaw_bins_deg: Vec<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            num_warps: 1,
            n_workers: 1,
            durations: Durations::REFERENCE,
            drop_frames: true,
            test_fraction: 0.2,
            yaw_bins_deg: vec![0.0, 15.0, 30.0, 45.0],
        }
    }
}

impl ProtocolConfig {
    pub fn scheduler(&self) -> SchedulerConfig {
        if self.n_workers <= 1 {
            SchedulerConfig::sequential(self.num_warps)
        } else {
            SchedulerConfig::parallel(self.n_workers, self.num_warps)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test fraction must lie in (0, 1)"));
        }
        self.durations.validate()?;
        self.scheduler().validate()
    }
}

/// Scores of one yaw bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YawBin {
    pub yaw_deg: f64,
    pub metrics: MetricsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub protocol: Protocol,
    /// Mean over every native frame (and every bin for novel views).
    pub metrics: MetricsResult,
    pub per_frame: Vec<MetricsResult>,
    pub bins: Vec<YawBin>,
    pub native_fps: Option<u32>,
    /// Every `stride`-th native frame is processed; the rest repeat the last
    /// displayed image.
    pub stride: usize,
    pub processed: usize,
    pub report: TimingReport,
}

/// JSON form of a protocol result.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolSummary {
    pub protocol: String,
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub frames: usize,
    pub processed: usize,
    pub stride: usize,
    pub native_fps: Option<u32>,
    pub bins: Vec<YawBin>,
    pub timing: TimingSummary,
}

impl ProtocolResult {
    pub fn summary(&self) -> ProtocolSummary {
        ProtocolSummary {
            protocol: self.protocol.to_string(),
            l1: self.metrics.l1,
            psnr: self.metrics.psnr,
            ssim: self.metrics.ssim,
            frames: self.per_frame.len(),
            processed: self.processed,
            stride: self.stride,
            native_fps: self.native_fps,
            bins: self.bins.clone(),
            timing: self.report.summary(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}

/// Cache frame per processed frame under `cfg`'s schedule.
pub fn cache_assignment(report: &TimingReport) -> Vec<usize> {
    report.warp_jobs().map(|j| j.cache_frame.unwrap_or(0)).collect()
}

/// Renders `frames` through the generator/warp schedule: frame `t` is warped
/// from the cache of `mapping[t]`. Generator passes are shared between frames.
pub fn render_scheduled(models: &Models, frames: &[Frame], mapping: &[usize]) -> Result<Vec<Tensor<f32>>> {
    let mut caches: Vec<Option<Cache>> = vec![None; frames.len()];
    let mut out = Vec::with_capacity(frames.len());
    for (t, &c) in mapping.iter().enumerate() {
        if c > t {
            return Err(Error::usage(format!("frame {t} scheduled against future cache {c}")));
        }
        if caches[c].is_none() {
            let (_, cache) = generator_forward(&models.texture, &models.generator, &frames[c], None)?;
            caches[c] = Some(cache);
        }
        out.push(warp_image(models, caches[c].as_ref().expect("filled above"), &frames[t])?);
        // Caches older than the one just used are never needed again.
        for old in caches.iter_mut().take(c) {
            *old = None;
        }
    }
    Ok(out)
}

fn score(images: &[Tensor<f32>], frames: &[Frame]) -> Result<Vec<MetricsResult>> {
    images.iter().zip(frames).map(|(p, f)| compute_metrics(p, &f.image)).collect()
}

/// Test window of `dataset` rendered at `fps`, aligned to the same start
/// time as the dataset's own test split. The 30 fps window subsamples the
/// 60 fps one so both online protocols see the same rendered frames.
pub fn test_window(dataset: &Dataset, test_fraction: f64, fps: u32) -> Result<Vec<Frame>> {
    let start = ((dataset.len() as f64) * (1.0 - test_fraction)).round() as usize;
    let (num, den) = (60usize, dataset.fps as usize);
    if fps != 30 && fps != 60 {
        return Err(Error::config(format!("online windows run at 30 or 60 fps, not {fps}")));
    }
    if den == 0 || !(start * num).is_multiple_of(den) || !(dataset.len() * num).is_multiple_of(den) {
        return Err(Error::config(format!("cannot resample a {} fps capture to 60 fps", dataset.fps)));
    }
    let high: Vec<Frame> = if den == 60 {
        dataset.frames[start..].to_vec()
    } else {
        let spec = DatasetSpec { fps: 60, frames: dataset.len() * num / den, ..dataset.spec() };
        let track = spec.trajectory()?;
        let mut all = spec.renderer()?.render_sequence(&track);
        all.split_off(start * num / den)
    };
    Ok(high.into_iter().step_by(60 / fps as usize).collect())
}

/// Pipeline capacity in frames per second under `cfg`.
pub fn pipeline_capacity(cfg: &ProtocolConfig) -> Result<f64> {
    let frames = 40 * cfg.num_warps * cfg.n_workers.max(1) + 1;
    Ok(simulate_schedule(&cfg.scheduler(), &cfg.durations, frames)?.report.fps)
}

/// Evaluates `models` on the test segment of `dataset` under `protocol`.
pub fn evaluate_protocol(protocol: Protocol, models: &Models, dataset: &Dataset, cfg: &ProtocolConfig) -> Result<ProtocolResult> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::usage("empty dataset"));
    }
    let sched = cfg.scheduler();
    match protocol {
        Protocol::Offline => {
            let (_, test) = dataset.split(1.0 - cfg.test_fraction);
            let report = simulate_schedule(&sched, &cfg.durations, test.len())?.report;
            let images = render_scheduled(models, test, &cache_assignment(&report))?;
            let per_frame = score(&images, test)?;
            Ok(ProtocolResult {
                protocol,
                metrics: MetricsResult::mean(&per_frame),
                per_frame,
                bins: Vec::new(),
                native_fps: Some(dataset.fps),
                stride: 1,
                processed: test.len(),
                report,
            })
        }
        Protocol::Online30 | Protocol::Online60 => {
            let fps = protocol.native_fps().expect("online protocol");
            let window = test_window(dataset, cfg.test_fraction, fps)?;
            let stride = if cfg.drop_frames {
                let cap = pipeline_capacity(cfg)?;
                if cap >= fps as f64 {
                    1
                } else {
                    (fps as f64 / cap).ceil() as usize
                }
            } else {
                1
            };
            let processed: Vec<Frame> = window.iter().step_by(stride).cloned().collect();
            let input = Some(fps as f64 / stride as f64);
            let report = simulate_schedule(&sched.clone().with_input_fps(input), &cfg.durations, processed.len())?.report;
            let images = render_scheduled(models, &processed, &cache_assignment(&report))?;
            let shown: Vec<Tensor<f32>> = (0..window.len()).map(|t| images[t / stride].clone()).collect();
            let per_frame = score(&shown, &window)?;
            Ok(ProtocolResult {
                protocol,
                metrics: MetricsResult::mean(&per_frame),
                per_frame,
                bins: Vec::new(),
                native_fps: Some(fps),
                stride,
                processed: processed.len(),
                report,
            })
        }
        Protocol::NovelView => {
            if cfg.yaw_bins_deg.is_empty() {
                return Err(Error::config("novel-view needs at least one yaw bin"));
            }
            let (_, test) = dataset.split(1.0 - cfg.test_fraction);
            let spec = dataset.spec();
            let renderer = spec.renderer()?;
            let report = simulate_schedule(&sched, &cfg.durations, test.len())?.report;
            let mapping = cache_assignment(&report);
            let mut bins = Vec::with_capacity(cfg.yaw_bins_deg.len());
            let mut per_frame = Vec::new();
            for &yaw in &cfg.yaw_bins_deg {
                let track: Vec<_> = test
                    .iter()
                    .map(|f| {
                        let mut p = with_yaw_offset(&f.params, yaw.to_radians());
                        p.expr.iter_mut().for_each(|e| *e = 0.0);
                        p
                    })
                    .collect();
                let frames = renderer.render_sequence(&track);
                let images = render_scheduled(models, &frames, &mapping)?;
                let scores = score(&images, &frames)?;
                bins.push(YawBin { yaw_deg: yaw, metrics: MetricsResult::mean(&scores) });
                per_frame.extend(scores);
            }
            Ok(ProtocolResult {
                protocol,
                metrics: MetricsResult::mean(&per_frame),
                per_frame,
                bins,
                native_fps: Some(dataset.fps),
                stride: 1,
                processed: test.len(),
                report,
            })
        }
    }
}
