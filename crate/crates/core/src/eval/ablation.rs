use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheduler::{simulate_schedule, Durations, SchedulerConfig};
use crate::scene::Frame;
use crate::training::{train_warp_head, Models, TrainConfig};
use crate::warp::{AblationFlags, WarpConfig, WarpNet};

use super::metrics::{compute_metrics, MetricsResult};
use super::protocol::cache_assignment;
use super::timing::{generator_pass, median, warp_image};

/// One warp-head variant to train and score.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub name: String,
    pub flags: AblationFlags,
    pub use_c4: bool,
    pub use_c5: bool,
}

impl AblationConfig {
    pub fn new(name: &str, flags: AblationFlags) -> Self {
        Self { name: name.to_string(), flags, use_c4: true, use_c5: true }
    }

    fn key(&self) -> (AblationFlags, bool, bool) {
        (self.flags, self.use_c4, self.use_c5)
    }
}

/// The component rows followed by the cache-layer sweep.
pub fn ablation_configs() -> Vec<AblationConfig> {
    let mut out: Vec<_> = AblationFlags::table_rows().into_iter().map(|(n, f)| AblationConfig::new(n, f)).collect();
    let full = AblationFlags::FULL;
    out.push(AblationConfig { use_c4: false, use_c5: false, ..AblationConfig::new("c3", full) });
    out.push(AblationConfig { use_c5: false, ..AblationConfig::new("c3+c4", full) });
    out.push(AblationConfig::new("c3+c4+c5", full));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub flags: String,
    pub use_c4: bool,
    pub use_c5: bool,
    pub metrics: MetricsResult,
    /// Median warp wall time per frame.
    pub latency_ms: f64,
    /// Latency relative to the full configuration.
    pub rel_latency: f64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_HEADER: &str = "config,flags,c4,c5,l1,psnr,ssim,latency_ms,rel_latency,macs";

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{ABLATION_HEADER}\n");
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.name, r.flags, r.use_c4, r.use_c5, m.l1, m.psnr, m.ssim, r.latency_ms, r.rel_latency, r.macs
            )
            .expect("string write");
        }
        s
    }

    /// The CSV without wall-clock columns, which is reproducible bit for bit.
    pub fn quality_csv(&self) -> String {
        let mut s = String::from("config,flags,c4,c5,l1,psnr,ssim,macs\n");
        for r in &self.rows {
            let m = &r.metrics;
            writeln!(s, "{},{},{},{},{},{},{},{}", r.name, r.flags, r.use_c4, r.use_c5, m.l1, m.psnr, m.ssim, r.macs)
                .expect("string write");
        }
        s
    }
}

/// Trains a fresh warp head per configuration against the frozen texture and
/// generator of `models`, then scores 1x warping on `test`. Every head
/// starts from the same seed and gets the same budget `cfg`. Identical
/// configurations are trained once.
pub fn run_ablation(
    models: &Models,
    train: &[Frame],
    test: &[Frame],
    configs: &[AblationConfig],
    cfg: &TrainConfig,
) -> Result<AblationTable> {
    if train.len() < 2 || test.is_empty() {
        return Err(Error::usage("ablation needs at least two training frames and one test frame"));
    }
    if configs.is_empty() {
        return Err(Error::usage("no ablation configurations"));
    }
    let (_, train_caches) = generator_pass(models, train)?;
    let (_, test_caches) = generator_pass(models, test)?;
    let mapping = cache_assignment(&simulate_schedule(&SchedulerConfig::sequential(1), &Durations::REFERENCE, test.len())?.report);
    let (h, w) = (test[0].height(), test[0].width());
    let mut rows: Vec<AblationRow> = Vec::with_capacity(configs.len());
    let mut done: Vec<((AblationFlags, bool, bool), usize)> = Vec::new();
    for c in configs {
        if let Some(&(_, i)) = done.iter().find(|(k, _)| *k == c.key()) {
            let row = AblationRow { name: c.name.clone(), ..rows[i].clone() };
            rows.push(row);
            continue;
        }
        let wc = WarpConfig { flags: c.flags, use_c4: c.use_c4, use_c5: c.use_c5, ..models.warp.config.clone() };
        let mut net = WarpNet::new(wc)?;
        train_warp_head(&mut net, &models.texture, &train_caches, train, cfg)?;
        let variant = Models { warp: net, ..models.clone() };
        let mut scores = Vec::with_capacity(test.len());
        let mut times = Vec::with_capacity(test.len());
        for (t, &k) in mapping.iter().enumerate() {
            let t0 = Instant::now();
            let img = warp_image(&variant, &test_caches[k], &test[t])?;
            times.push(t0.elapsed().as_secs_f64() * 1000.0);
            scores.push(compute_metrics(&img, &test[t].image)?);
        }
        done.push((c.key(), rows.len()));
        rows.push(AblationRow {
            name: c.name.clone(),
            flags: c.flags.label(),
            use_c4: c.use_c4,
            use_c5: c.use_c5,
            metrics: MetricsResult::mean(&scores),
            latency_ms: median(&mut times),
            rel_latency: 0.0,
            macs: variant.warp.macs(h, w),
        });
    }
    let reference = rows
        .iter()
        .find(|r| r.name == "full")
        .or_else(|| rows.iter().find(|r| r.flags == AblationFlags::FULL.label() && r.use_c4 && r.use_c5))
        .unwrap_or(&rows[0])
        .latency_ms;
    for r in &mut rows {
        r.rel_latency = r.latency_ms / reference;
    }
    Ok(AblationTable { rows })
}
