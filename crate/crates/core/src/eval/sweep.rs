use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::Frame;
use crate::training::Models;

use super::metrics::{compute_metrics, MetricsResult};
use super::timing::{generator_pass, warp_image};

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares. A perfectly flat response has `r2 = 1`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::usage("a line fit needs at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::usage("a line fit needs distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub pairs: usize,
    pub metrics: MetricsResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// PSNR against distance over `d >= 1`.
    pub fit: LinearFit,
}

impl SweepResult {
    pub fn psnr(&self, d: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.d == d).map(|r| r.metrics.psnr)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("d,pairs,l1,psnr,ssim,fit_psnr\n");
        for r in &self.rows {
            let fit = if r.d == 0 { String::new() } else { format!("{}", self.fit.at(r.d as f64)) };
            let m = &r.metrics;
            writeln!(s, "{},{},{},{},{},{fit}", r.d, r.pairs, m.l1, m.psnr, m.ssim).expect("string write");
        }
        s
    }
}

/// Scores warping every target frame from the cache `d` frames earlier, for
/// `d` in `0..=d_max`. All distances share the same targets.
pub fn warp_distance_sweep(models: &Models, frames: &[Frame], d_max: usize) -> Result<SweepResult> {
    if d_max < 2 {
        return Err(Error::usage("the warp sweep needs a maximum distance of at least 2"));
    }
    if frames.len() <= d_max {
        return Err(Error::usage(format!("the warp sweep needs more than {d_max} frames, got {}", frames.len())));
    }
    let (_, caches) = generator_pass(models, frames)?;
    let mut rows = Vec::with_capacity(d_max + 1);
    for d in 0..=d_max {
        let scores = (d_max..frames.len())
            .map(|t| compute_metrics(&warp_image(models, &caches[t - d], &frames[t])?, &frames[t].image))
            .collect::<Result<Vec<_>>>()?;
        rows.push(SweepRow { d, pairs: scores.len(), metrics: MetricsResult::mean(&scores) });
    }
    let xs: Vec<f64> = rows[1..].iter().map(|r| r.d as f64).collect();
    let ys: Vec<f64> = rows[1..].iter().map(|r| r.metrics.psnr).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(SweepResult { rows, fit })
}
