use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_kernel, Tensor};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Image quality of a prediction against ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsResult {
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricsResult {
    /// Componentwise mean.
    pub fn mean(items: &[MetricsResult]) -> MetricsResult {
        let n = items.len().max(1) as f64;
        MetricsResult {
            l1: items.iter().map(|m| m.l1).sum::<f64>() / n,
            psnr: items.iter().map(|m| m.psnr).sum::<f64>() / n,
            ssim: items.iter().map(|m| m.ssim).sum::<f64>() / n,
        }
    }
}

/// PSNR for unit peak, capped for zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Valid-mode separable filtering of one `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ho, wo) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for xo in 0..wo {
            tmp[y * wo + xo] = (0..n).map(|i| k[i] * x[y * w + xo + i]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for yo in 0..ho {
        for xo in 0..wo {
            out[yo * wo + xo] = (0..n).map(|i| k[i] * tmp[(yo + i) * wo + xo]).sum();
        }
    }
    (out, ho, wo)
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<_>>();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, _, _) = filter_valid(a, h, w, k);
    let (mu_b, _, _) = filter_valid(b, h, w, k);
    let (e_aa, _, _) = filter_valid(&sq(a), h, w, k);
    let (e_bb, _, _) = filter_valid(&sq(b), h, w, k);
    let (e_ab, _, _) = filter_valid(&ab, h, w, k);
    let n = mu_a.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    acc / n as f64
}

/// L1, PSNR and SSIM (Gaussian window 11, sigma 1.5, valid region, mean
/// over channels) of two `C x H x W` images in `[0, 1]`.
pub fn compute_metrics(pred: &Tensor<f32>, gt: &Tensor<f32>) -> Result<MetricsResult> {
    if pred.shape() != gt.shape() {
        return Err(Error::usage(format!("metric shapes differ: {:?} vs {:?}", pred.shape(), gt.shape())));
    }
    let (c, h, w) = pred.dims3().map_err(|e| Error::usage(e.to_string()))?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::usage(format!("images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")));
    }
    let n = pred.numel() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let d = p as f64 - g as f64;
        abs += d.abs();
        sq += d * d;
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)?;
    let plane = h * w;
    let ssim = (0..c)
        .map(|ch| {
            let a: Vec<f64> = pred.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).collect();
            let b: Vec<f64> = gt.data()[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).collect();
            ssim_plane(&a, &b, h, w, &k)
        })
        .sum::<f64>()
        / c as f64;
    Ok(MetricsResult { l1: abs / n, psnr: psnr_from_mse(sq / n), ssim })
}
