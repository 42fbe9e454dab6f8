//! Direct-loop reference implementations.

use neural_cache::numerics::Tensor;

/// Zero-padded cross-correlation, one output element at a time.
pub fn conv2d(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&Tensor<f64>>, stride: usize, pad: usize) -> Tensor<f64> {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let at = |c: usize, y: isize, xx: isize| -> f64 {
        if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
            0.0
        } else {
            x.data()[(c * h + y as usize) * w + xx as usize]
        }
    };
    let mut out = vec![0.0; cout * ho * wo];
    for o in 0..cout {
        for yo in 0..ho {
            for xo in 0..wo {
                let mut s = bias.map_or(0.0, |b| b.data()[o]);
                for c in 0..cin {
                    for i in 0..kh {
                        for j in 0..kw {
                            let y = (yo * stride + i) as isize - pad as isize;
                            let xx = (xo * stride + j) as isize - pad as isize;
                            s += k.data()[((o * cin + c) * kh + i) * kw + j] * at(c, y, xx);
                        }
                    }
                }
                out[(o * ho + yo) * wo + xo] = s;
            }
        }
    }
    Tensor::new(vec![cout, ho, wo], out).unwrap()
}

/// Half-pixel bilinear 2x upsampling with edge replication.
pub fn upsample2x(x: &Tensor<f64>) -> Tensor<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let tap = |o: usize, n: usize| {
        let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, src - i0 as f64)
    };
    Tensor::from_fn(vec![c, 2 * h, 2 * w], |idx| {
        let (ch, rest) = (idx / (4 * h * w), idx % (4 * h * w));
        let (yo, xo) = (rest / (2 * w), rest % (2 * w));
        let (y0, y1, fy) = tap(yo, h);
        let (x0, x1, fx) = tap(xo, w);
        let v = |y: usize, xx: usize| x.data()[(ch * h + y) * w + xx];
        (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1))
    })
}

/// L1, PSNR and SSIM computed window by window with explicit 2-D Gaussian
/// weights; returns `(l1, psnr, ssim)`.
pub fn metrics(a: &Tensor<f32>, b: &Tensor<f32>) -> (f64, f64, f64) {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let n = a.numel() as f64;
    let diffs: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| *x as f64 - *y as f64).collect();
    let l1 = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    let mse = diffs.iter().map(|d| d * d).sum::<f64>() / n;
    let psnr = if mse == 0.0 { 99.0 } else { (10.0 * (1.0 / mse).log10()).min(99.0) };

    let r = 5usize;
    let mut g = vec![0.0; 121];
    for i in 0..11 {
        for j in 0..11 {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            g[i * 11 + j] = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (1e-4, 9e-4);
    let mut ssim = 0.0;
    for ch in 0..c {
        let pa = |y: usize, x: usize| a.data()[(ch * h + y) * w + x] as f64;
        let pb = |y: usize, x: usize| b.data()[(ch * h + y) * w + x] as f64;
        let mut acc = 0.0;
        let mut count = 0;
        for cy in r..h - r {
            for cx in r..w - r {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        ma += g[i * 11 + j] * pa(cy + i - r, cx + j - r);
                        mb += g[i * 11 + j] * pb(cy + i - r, cx + j - r);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let da = pa(cy + i - r, cx + j - r) - ma;
                        let db = pb(cy + i - r, cx + j - r) - mb;
                        va += g[i * 11 + j] * da * da;
                        vb += g[i * 11 + j] * db * db;
                        cov += g[i * 11 + j] * da * db;
                    }
                }
                acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        ssim += acc / count as f64;
    }
    (l1, psnr, ssim / c as f64)
}
