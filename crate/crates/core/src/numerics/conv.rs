//! Convolutions via im2col + GEMM, and the separable resampling ops built
//! on clamped bilinear taps.

use crate::error::{Error, Result};

use super::{Scalar, Tape, Tensor, Var, View};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn n(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let n = g.n();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, o) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *o = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let n = g.n();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut dx[(c * g.h + iy as usize) * g.w..][..g.w];
                    for (ox, &v) in src[oy * g.wo..(oy + 1) * g.wo].iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 convolution as one GEMM per kernel tap over shifted views of a
/// zero-padded copy of `x`, accumulated into `out` (`cout x ho x wo`).
/// Rows of the intermediate result run over the padded width; the extra
/// columns are dropped.
fn conv_shifted<T: Scalar>(x: &[T], weight: &[T], g: &ConvGeom, cout: usize, out: &mut [T]) {
    let (hp, wp) = (g.h + 2 * g.pad, g.w + 2 * g.pad);
    let plane = hp * wp;
    let mut xp = vec![T::zero(); g.cin * plane + g.kw];
    for c in 0..g.cin {
        for y in 0..g.h {
            let dst = c * plane + (y + g.pad) * wp + g.pad;
            xp[dst..dst + g.w].copy_from_slice(&x[(c * g.h + y) * g.w..][..g.w]);
        }
    }
    let np = g.ho * wp;
    let mut acc = vec![T::zero(); cout * np];
    let taps = g.kh * g.kw;
    for ki in 0..g.kh {
        for kj in 0..g.kw {
            let wv = View { offset: ki * g.kw + kj, row_stride: g.cin * taps, col_stride: taps };
            let xv = View { offset: ki * wp + kj, row_stride: plane, col_stride: 1 };
            let cv = View { offset: 0, row_stride: np, col_stride: 1 };
            T::gemm_view(cout, g.cin, np, T::one(), weight, wv, &xp, xv, T::one(), &mut acc, cv);
        }
    }
    for o in 0..cout {
        for y in 0..g.ho {
            let src = &acc[o * np + y * wp..][..g.wo];
            for (d, &v) in out[(o * g.ho + y) * g.wo..][..g.wo].iter_mut().zip(src) {
                *d += v;
            }
        }
    }
}

/// Output size of a convolution along one axis.
pub fn conv_out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

/// Clamped linear-interpolation taps: `(i0, i1, w0, w1)` per output index.
type Taps<T> = Vec<(usize, usize, T, T)>;

fn upsample_taps<T: Scalar>(n: usize) -> Taps<T> {
    (0..2 * n)
        .map(|o| {
            let src = (o as f64 + 0.5) / 2.0 - 0.5;
            let i0 = src.floor();
            let f = src - i0;
            let clamp = |i: f64| i.max(0.0).min((n - 1) as f64) as usize;
            (clamp(i0), clamp(i0 + 1.0), T::of(1.0 - f), T::of(f))
        })
        .collect()
}

/// Applies `rows` taps along H and `cols` taps along W.
fn resample_forward<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, rows: &Taps<T>, cols: &Taps<T>) -> Vec<T> {
    let (ho, wo) = (rows.len(), cols.len());
    let mut tmp = vec![T::zero(); c * h * wo];
    for ch in 0..c {
        for y in 0..h {
            let src = &x[(ch * h + y) * w..][..w];
            let dst = &mut tmp[(ch * h + y) * wo..][..wo];
            for (d, &(i0, i1, w0, w1)) in dst.iter_mut().zip(cols) {
                *d = w0 * src[i0] + w1 * src[i1];
            }
        }
    }
    let mut out = vec![T::zero(); c * ho * wo];
    for ch in 0..c {
        for (oy, &(i0, i1, w0, w1)) in rows.iter().enumerate() {
            let (r0, r1) = ((ch * h + i0) * wo, (ch * h + i1) * wo);
            let dst = &mut out[(ch * ho + oy) * wo..][..wo];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = w0 * tmp[r0 + ox] + w1 * tmp[r1 + ox];
            }
        }
    }
    out
}

fn resample_backward<T: Scalar>(
    g: &[T],
    c: usize,
    h: usize,
    w: usize,
    rows: &Taps<T>,
    cols: &Taps<T>,
    dx: &mut [T],
) {
    let (ho, wo) = (rows.len(), cols.len());
    let mut tmp = vec![T::zero(); c * h * wo];
    for ch in 0..c {
        for (oy, &(i0, i1, w0, w1)) in rows.iter().enumerate() {
            let src = &g[(ch * ho + oy) * wo..][..wo];
            for (ox, &v) in src.iter().enumerate() {
                tmp[(ch * h + i0) * wo + ox] += w0 * v;
                tmp[(ch * h + i1) * wo + ox] += w1 * v;
            }
        }
    }
    for ch in 0..c {
        for y in 0..h {
            let src = &tmp[(ch * h + y) * wo..][..wo];
            let dst = &mut dx[(ch * h + y) * w..][..w];
            for (&v, &(i0, i1, w0, w1)) in src.iter().zip(cols) {
                dst[i0] += w0 * v;
                dst[i1] += w1 * v;
            }
        }
    }
}

/// Normalized 1-D Gaussian weights for offsets `-size/2 ..= size/2`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size.is_multiple_of(2) {
        return Err(Error::config(format!("Gaussian filter size must be odd, got {size}")));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::config(format!("Gaussian sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as isize;
    let raw: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / z).collect())
}

fn blur_axis<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: &[T], horizontal: bool, adjoint: bool) -> Vec<T> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![T::zero(); x.len()];
    let (len, stride_in_line, lines_per_plane, line_stride) =
        if horizontal { (w, 1, h, w) } else { (h, w, w, 1) };
    for ch in 0..c {
        let base = ch * h * w;
        for line in 0..lines_per_plane {
            let start = base + line * line_stride;
            for i in 0..len {
                let xi = x[start + i * stride_in_line];
                for (j, &kv) in k.iter().enumerate() {
                    let s = (i as isize + j as isize - r).clamp(0, len as isize - 1) as usize;
                    if adjoint {
                        // scatter: out[s] += k * x[i]
                        out[start + s * stride_in_line] += kv * xi;
                    } else {
                        out[start + i * stride_in_line] += kv * x[start + s * stride_in_line];
                    }
                }
            }
        }
    }
    out
}

impl<'a, T: Scalar> Tape<'a, T> {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `x` is `C_in x H x W`, `weight` is `C_out x C_in x kH x kW` with odd
    /// kernel extents, `bias` is `C_out`.
    pub fn conv2d(&self, x: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (geom, cout, out) = {
            let xv = self.value(x);
            let wv = self.value(weight);
            let (cin, h, w) = xv.dims3()?;
            let (cout, wcin, kh, kw) = match wv.shape() {
                &[a, b, c, d] => (a, b, c, d),
                s => return Err(Error::config(format!("conv2d kernel must be 4-D, got {s:?}"))),
            };
            if wcin != cin {
                return Err(Error::config(format!(
                    "conv2d: input has {cin} channels but kernel expects {wcin} (dimension C_in)"
                )));
            }
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::config(format!("conv2d: kernel {kh}x{kw} must have odd extents")));
            }
            let ho = conv_out_size(h, kh, stride, pad)
                .ok_or_else(|| Error::config(format!("conv2d: height {h} too small for kernel {kh} (dimension H)")))?;
            let wo = conv_out_size(w, kw, stride, pad)
                .ok_or_else(|| Error::config(format!("conv2d: width {w} too small for kernel {kw} (dimension W)")))?;
            if let Some(b) = bias {
                let n = self.value(b).numel();
                if n != cout {
                    return Err(Error::config(format!("conv2d: bias has {n} entries, expected {cout} (dimension C_out)")));
                }
            }
            let geom = ConvGeom { cin, h, w, kh, kw, stride, pad, ho, wo };
            let n = geom.n();
            let mut out = vec![T::zero(); cout * n];
            if let Some(b) = bias {
                let bv = self.value(b);
                for (co, &bias_v) in bv.data().iter().enumerate() {
                    out[co * n..(co + 1) * n].fill(bias_v);
                }
            }
            let beta = if bias.is_some() { T::one() } else { T::zero() };
            if geom.is_pointwise() {
                T::gemm(cout, geom.k(), n, T::one(), wv.data(), false, xv.data(), false, beta, &mut out);
            } else if geom.stride == 1 {
                conv_shifted(xv.data(), wv.data(), &geom, cout, &mut out);
            } else {
                let mut cols = vec![T::zero(); geom.k() * n];
                im2col(xv.data(), &geom, &mut cols);
                T::gemm(cout, geom.k(), n, T::one(), wv.data(), false, &cols, false, beta, &mut out);
            }
            (geom, cout, Tensor::new(vec![cout, ho, wo], out)?)
        };
        let mut parents = vec![x, weight];
        parents.extend(bias);
        Ok(self.push_op(out, &parents, move |g, vals, grads| {
            let (kdim, n) = (geom.k(), geom.n());
            if let Some(b) = bias {
                if let Some(db) = grads.slot(b) {
                    for (co, d) in db.iter_mut().enumerate() {
                        *d += g[co * n..(co + 1) * n].iter().copied().sum::<T>();
                    }
                }
            }
            let need_w = grads.requires(weight);
            let need_x = grads.requires(x);
            if !need_w && !need_x {
                return;
            }
            let xv = vals.get(x).data();
            let cols_owned;
            let cols: &[T] = if geom.is_pointwise() {
                xv
            } else if need_w {
                let mut c = vec![T::zero(); kdim * n];
                im2col(xv, &geom, &mut c);
                cols_owned = c;
                &cols_owned
            } else {
                &[]
            };
            if let Some(dw) = grads.slot(weight) {
                T::gemm(cout, n, kdim, T::one(), g, false, cols, true, T::one(), dw);
            }
            if need_x {
                let wv = vals.get(weight).data();
                if geom.is_pointwise() {
                    let dx = grads.slot(x).expect("differentiable input");
                    T::gemm(kdim, cout, n, T::one(), wv, true, g, false, T::one(), dx);
                } else {
                    let mut dcols = vec![T::zero(); kdim * n];
                    T::gemm(kdim, cout, n, T::one(), wv, true, g, false, T::zero(), &mut dcols);
                    let dx = grads.slot(x).expect("differentiable input");
                    col2im(&dcols, &geom, dx);
                }
            }
        }))
    }

    /// Bilinear 2x upsampling, align-corners false, clamped borders.
    pub fn upsample2x(&self, x: Var) -> Result<Var> {
        let (c, h, w, out) = {
            let xv = self.value(x);
            let (c, h, w) = xv.dims3()?;
            let rows = upsample_taps::<T>(h);
            let cols = upsample_taps::<T>(w);
            let out = resample_forward(xv.data(), c, h, w, &rows, &cols);
            (c, h, w, Tensor::new(vec![c, 2 * h, 2 * w], out)?)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                let rows = upsample_taps::<T>(h);
                let cols = upsample_taps::<T>(w);
                resample_backward(g, c, h, w, &rows, &cols, dx);
            }
        }))
    }

    /// Bilinear 2x upsample followed by a size-preserving convolution.
    pub fn upconv2x(&self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        {
            let xv = self.value(x);
            let (_, h, w) = xv.dims3()?;
            if h < 2 || w < 2 {
                return Err(Error::config(format!("upconv2x needs spatial size >= 2, got {h}x{w}")));
            }
        }
        let k = self.value(weight).shape().get(2).copied().unwrap_or(1);
        let up = self.upsample2x(x)?;
        self.conv2d(up, weight, bias, 1, k / 2)
    }

    /// Places each input sample at even coordinates of a zero map of twice
    /// the size. Followed by a convolution this is a stride-2 transposed
    /// convolution.
    pub fn zero_insert2x(&self, x: Var) -> Result<Var> {
        let (c, h, w, out) = {
            let xv = self.value(x);
            let (c, h, w) = xv.dims3()?;
            let mut out = vec![T::zero(); c * 4 * h * w];
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        out[(ch * 2 * h + 2 * y) * 2 * w + 2 * xx] = xv.data()[(ch * h + y) * w + xx];
                    }
                }
            }
            (c, h, w, Tensor::new(vec![c, 2 * h, 2 * w], out)?)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(ch * h + y) * w + xx] += g[(ch * 2 * h + 2 * y) * 2 * w + 2 * xx];
                        }
                    }
                }
            }
        }))
    }

    /// Mean over non-overlapping `k x k` blocks.
    pub fn avg_pool(&self, x: Var, k: usize) -> Result<Var> {
        let (c, h, w, out) = {
            let xv = self.value(x);
            let (c, h, w) = xv.dims3()?;
            if k == 0 || h % k != 0 || w % k != 0 {
                return Err(Error::config(format!("avg_pool: {h}x{w} not divisible by {k}")));
            }
            let (ho, wo) = (h / k, w / k);
            let inv = T::of(1.0 / (k * k) as f64);
            let mut out = vec![T::zero(); c * ho * wo];
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..w {
                        out[(ch * ho + y / k) * wo + xx / k] += xv.data()[(ch * h + y) * w + xx] * inv;
                    }
                }
            }
            (c, h, w, Tensor::new(vec![c, ho, wo], out)?)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                let (ho, wo) = (h / k, w / k);
                let inv = T::of(1.0 / (k * k) as f64);
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(ch * h + y) * w + xx] += g[(ch * ho + y / k) * wo + xx / k] * inv;
                        }
                    }
                }
            }
        }))
    }

    /// Bilinear lookup of `texture` (`C x Ht x Wt`) at normalized
    /// coordinates `coords` (`2 x H x W`, channel 0 = horizontal `u`,
    /// channel 1 = vertical `v`). Texel `i` is centered at `(i + 0.5) / Wt`;
    /// coordinates outside `[0, 1]` are clamped. Differentiable with respect
    /// to the texture only.
    pub fn grid_sample(&self, texture: Var, coords: &Tensor<T>) -> Result<Var> {
        let (c, ht, wt, taps, out) = {
            let tv = self.value(texture);
            let (c, ht, wt) = tv.dims3()?;
            let (cc, h, w) = coords.dims3()?;
            if cc != 2 {
                return Err(Error::config(format!("grid_sample coords need 2 channels, got {cc}")));
            }
            let plane = h * w;
            let cd = coords.data();
            let axis = |v: T, n: usize| -> (usize, usize, T) {
                let v = v.max(T::zero()).min(T::one());
                let p = v * T::of(n as f64) - T::of(0.5);
                let f0 = p.floor();
                let frac = p - f0;
                let i0 = f0.to_isize().unwrap_or(0);
                let clamp = |i: isize| i.clamp(0, n as isize - 1) as usize;
                (clamp(i0), clamp(i0 + 1), frac)
            };
            let mut taps: Vec<([usize; 4], [T; 4])> = Vec::with_capacity(plane);
            for p in 0..plane {
                let (x0, x1, fx) = axis(cd[p], wt);
                let (y0, y1, fy) = axis(cd[plane + p], ht);
                let one = T::one();
                taps.push((
                    [y0 * wt + x0, y0 * wt + x1, y1 * wt + x0, y1 * wt + x1],
                    [(one - fx) * (one - fy), fx * (one - fy), (one - fx) * fy, fx * fy],
                ));
            }
            let td = tv.data();
            let tplane = ht * wt;
            let mut out = vec![T::zero(); c * plane];
            for ch in 0..c {
                let src = &td[ch * tplane..(ch + 1) * tplane];
                for (o, (idx, wg)) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(&taps) {
                    *o = wg[0] * src[idx[0]] + wg[1] * src[idx[1]] + wg[2] * src[idx[2]] + wg[3] * src[idx[3]];
                }
            }
            (c, ht, wt, taps, Tensor::new(vec![c, h, w], out)?)
        };
        Ok(self.push_op(out, &[texture], move |g, _, grads| {
            if let Some(dt) = grads.slot(texture) {
                let plane = taps.len();
                let tplane = ht * wt;
                for ch in 0..c {
                    let dst = &mut dt[ch * tplane..(ch + 1) * tplane];
                    for (&gv, (idx, wg)) in g[ch * plane..(ch + 1) * plane].iter().zip(&taps) {
                        for q in 0..4 {
                            dst[idx[q]] += wg[q] * gv;
                        }
                    }
                }
            }
        }))
    }

    /// Separable normalized Gaussian blur with clamped borders.
    pub fn gaussian_lpf(&self, x: Var, size: usize, sigma: f64) -> Result<Var> {
        let kernel: Vec<T> = gaussian_kernel(size, sigma)?.into_iter().map(T::of).collect();
        let (c, h, w, out) = {
            let xv = self.value(x);
            let (c, h, w) = xv.dims3()?;
            let tmp = blur_axis(xv.data(), c, h, w, &kernel, true, false);
            let out = blur_axis(&tmp, c, h, w, &kernel, false, false);
            (c, h, w, Tensor::new(vec![c, h, w], out)?)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                let tmp = blur_axis(g, c, h, w, &kernel, false, true);
                let back = blur_axis(&tmp, c, h, w, &kernel, true, true);
                for (d, v) in dx.iter_mut().zip(back) {
                    *d += v;
                }
            }
        }))
    }
}

/// Bilinear texture lookup on plain tensors (no gradient record).
pub fn grid_sample_bilinear<T: Scalar>(texture: &Tensor<T>, coords: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = Tape::no_grad();
    let t = tape.constant(texture.clone());
    let out = tape.grid_sample(t, coords)?;
    Ok(tape.detach(out))
}

/// Gaussian low-pass filter on a plain tensor.
pub fn gaussian_lpf<T: Scalar>(input: &Tensor<T>, size: usize, sigma: f64) -> Result<Tensor<T>> {
    let tape = Tape::no_grad();
    let x = tape.constant(input.clone());
    let out = tape.gaussian_lpf(x, size, sigma)?;
    Ok(tape.detach(out))
}

/// Plain convolution without a gradient record.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let tape = Tape::no_grad();
    let x = tape.constant(input.clone());
    let k = tape.constant(kernel.clone());
    let b = bias.map(|b| tape.constant(b.clone()));
    let out = tape.conv2d(x, k, b, stride, pad)?;
    Ok(tape.detach(out))
}

/// Plain bilinear upsample + convolution without a gradient record.
pub fn upconv2x<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let tape = Tape::no_grad();
    let x = tape.constant(input.clone());
    let k = tape.constant(kernel.clone());
    let b = bias.map(|b| tape.constant(b.clone()));
    let out = tape.upconv2x(x, k, b)?;
    Ok(tape.detach(out))
}

#[cfg(test)]
mod tests {
    use super::super::testing::{check_grad, random_tensor};
    use super::*;

    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
        let (cin, h, w) = x.dims3().unwrap();
        let (cout, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        let mut out = Tensor::zeros(vec![cout, ho, wo]);
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * stride + i) as isize - pad as isize;
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += k.data()[((co * cin + ci) * kh + i) * kw + j]
                                        * x.data()[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out.data_mut()[(co * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    fn reference_upsample(x: &Tensor<f64>) -> Tensor<f64> {
        let (c, h, w) = x.dims3().unwrap();
        let at = |ch: usize, y: isize, xx: isize| {
            let y = y.clamp(0, h as isize - 1) as usize;
            let xx = xx.clamp(0, w as isize - 1) as usize;
            x.data()[(ch * h + y) * w + xx]
        };
        Tensor::from_fn(vec![c, 2 * h, 2 * w], |i| {
            let ch = i / (4 * h * w);
            let oy = (i / (2 * w)) % (2 * h);
            let ox = i % (2 * w);
            let sy = (oy as f64 + 0.5) / 2.0 - 0.5;
            let sx = (ox as f64 + 0.5) / 2.0 - 0.5;
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let (y0, x0) = (y0 as isize, x0 as isize);
            (1.0 - fy) * ((1.0 - fx) * at(ch, y0, x0) + fx * at(ch, y0, x0 + 1))
                + fy * ((1.0 - fx) * at(ch, y0 + 1, x0) + fx * at(ch, y0 + 1, x0 + 1))
        })
    }

    fn identity_kernel() -> Tensor<f64> {
        Tensor::full(vec![1, 1, 1, 1], 1.0)
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = random_tensor(&[1, 5, 7], 1);
        let y = conv2d(&x, &identity_kernel(), None, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn box_filter_on_constant() {
        let x = Tensor::<f64>::full(vec![1, 5, 5], 7.0);
        let k = Tensor::full(vec![1, 1, 3, 3], 1.0 / 9.0);
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        assert!((y.data()[12] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn matches_loop_reference() {
        for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 1), (2, 2, 5)] {
            let x = random_tensor(&[3, 8, 8], 2);
            let kern = random_tensor(&[2, 3, k, k], 3);
            let b = random_tensor(&[2], 4);
            let y = conv2d(&x, &kern, Some(&b), stride, pad).unwrap();
            let r = naive_conv(&x, &kern, &b, stride, pad);
            assert_eq!(y.shape(), r.shape());
            assert!(y.max_abs_diff(&r) < 1e-6);
        }
    }

    #[test]
    fn shape_errors_name_dimension() {
        let x = Tensor::<f64>::zeros(vec![3, 8, 8]);
        let k = Tensor::zeros(vec![2, 4, 3, 3]);
        let err = conv2d(&x, &k, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("C_in"), "{err}");
        let k = Tensor::zeros(vec![2, 3, 2, 2]);
        assert!(matches!(conv2d(&x, &k, None, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn conv_gradients() {
        let x = random_tensor(&[2, 5, 6], 5);
        let k = random_tensor(&[3, 2, 3, 3], 6);
        let b = random_tensor(&[3], 7);
        let (k2, b2) = (k.clone(), b.clone());
        check_grad(&x, move |t, x| {
            let kv = t.constant(k2.clone());
            let bv = t.constant(b2.clone());
            let y = t.conv2d(x, kv, Some(bv), 2, 1).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
        let x2 = x.clone();
        check_grad(&k, move |t, k| {
            let xv = t.constant(x2.clone());
            let y = t.conv2d(xv, k, None, 1, 1).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
        check_grad(&b, move |t, b| {
            let xv = t.constant(x.clone());
            let kv = t.constant(k.clone());
            let y = t.conv2d(xv, kv, Some(b), 1, 1).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
    }

    #[test]
    fn pointwise_conv_gradients() {
        let x = random_tensor(&[3, 4, 4], 8);
        let k = random_tensor(&[2, 3, 1, 1], 9);
        let k2 = k.clone();
        check_grad(&x, move |t, x| {
            let kv = t.constant(k2.clone());
            let y = t.conv2d(x, kv, None, 1, 0).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
        check_grad(&k, move |t, k| {
            let xv = t.constant(x.clone());
            let y = t.conv2d(xv, k, None, 1, 0).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
    }

    #[test]
    fn upconv_constant_and_reference() {
        let x = Tensor::<f64>::full(vec![1, 3, 3], 2.5);
        let y = upconv2x(&x, &identity_kernel(), None).unwrap();
        assert_eq!(y.shape(), &[1, 6, 6]);
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));

        let x = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = upconv2x(&x, &identity_kernel(), None).unwrap();
        let r = reference_upsample(&x);
        assert!(y.max_abs_diff(&r) < 1e-12);
        // (1,1): 0.75 along each axis toward texel (0,0)
        let expect = 0.75 * (0.75 * 0.0 + 0.25 * 1.0) + 0.25 * (0.75 * 2.0 + 0.25 * 3.0);
        assert!((y.data()[4 + 1] - expect).abs() < 1e-12);
    }

    #[test]
    fn upsample_matches_reference_on_random() {
        let x = random_tensor(&[2, 3, 5], 10);
        let tape = Tape::no_grad();
        let v = tape.constant(x.clone());
        let y = tape.upsample2x(v).unwrap();
        assert!(tape.value(y).max_abs_diff(&reference_upsample(&x)) < 1e-12);
    }

    #[test]
    fn upconv_gradients() {
        let x = random_tensor(&[2, 3, 4], 11);
        let k = random_tensor(&[2, 2, 3, 3], 12);
        let k2 = k.clone();
        check_grad(&x, move |t, x| {
            let kv = t.constant(k2.clone());
            let y = t.upconv2x(x, kv, None).unwrap();
            t.sum(y)
        });
        check_grad(&k, move |t, k| {
            let xv = t.constant(x.clone());
            let y = t.upconv2x(xv, k, None).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
    }

    #[test]
    fn upconv_rejects_tiny_input() {
        let x = Tensor::<f64>::zeros(vec![1, 1, 4]);
        assert!(upconv2x(&x, &identity_kernel(), None).is_err());
    }

    #[test]
    fn zero_insert_and_pool_gradients() {
        let x = random_tensor(&[2, 4, 4], 13);
        check_grad(&x, |t, x| {
            let y = t.zero_insert2x(x).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
        check_grad(&x, |t, x| {
            let y = t.avg_pool(x, 2).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
    }

    #[test]
    fn avg_pool_values() {
        let x = Tensor::<f64>::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let tape = Tape::no_grad();
        let v = tape.constant(x);
        let y = tape.avg_pool(v, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[2.5]);
    }

    fn texel_center_coords(h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn(vec![2, h, w], |i| {
            let (c, p) = (i / (h * w), i % (h * w));
            if c == 0 {
                ((p % w) as f64 + 0.5) / w as f64
            } else {
                ((p / w) as f64 + 0.5) / h as f64
            }
        })
    }

    #[test]
    fn sampling_at_texel_centers_is_identity() {
        let tex = random_tensor(&[3, 6, 5], 14);
        let out = grid_sample_bilinear(&tex, &texel_center_coords(6, 5)).unwrap();
        assert_eq!(out.data(), tex.data());
    }

    #[test]
    fn sampling_center_and_clamp() {
        let tex = Tensor::<f64>::new(vec![1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let c = Tensor::new(vec![2, 1, 1], vec![0.5, 0.5]).unwrap();
        assert!((grid_sample_bilinear(&tex, &c).unwrap().data()[0] - 1.5).abs() < 1e-12);
        let a = Tensor::new(vec![2, 1, 1], vec![-0.3, 0.5]).unwrap();
        let b = Tensor::new(vec![2, 1, 1], vec![0.0, 0.5]).unwrap();
        assert_eq!(
            grid_sample_bilinear(&tex, &a).unwrap().data(),
            grid_sample_bilinear(&tex, &b).unwrap().data()
        );
    }

    #[test]
    fn sampling_gradient() {
        let tex = random_tensor(&[2, 4, 5], 15);
        let coords = random_tensor(&[2, 3, 3], 16).map(|v| v * 0.7 + 0.5);
        check_grad(&tex, move |t, x| {
            let y = t.grid_sample(x, &coords).unwrap();
            let s = t.square(y);
            t.sum(s)
        });
    }

    #[test]
    fn gaussian_kernel_closed_form() {
        let k = gaussian_kernel(5, 1.0).unwrap();
        let z: f64 = (-2i32..=2).map(|d| (-(d * d) as f64 / 2.0).exp()).sum();
        for (i, d) in (-2i32..=2).enumerate() {
            assert!((k[i] - (-(d * d) as f64 / 2.0).exp() / z).abs() < 1e-15);
        }
        assert!(matches!(gaussian_kernel(4, 1.0), Err(Error::Config(_))));
        assert!(gaussian_kernel(5, 0.0).is_err());
    }

    #[test]
    fn lpf_constant_and_impulse() {
        let x = Tensor::<f64>::full(vec![2, 7, 7], 3.25);
        let y = gaussian_lpf(&x, 5, 1.0).unwrap();
        assert!(y.data().iter().all(|&v| (v - 3.25).abs() < 1e-12));

        let mut imp = Tensor::<f64>::zeros(vec![1, 9, 9]);
        imp.data_mut()[4 * 9 + 4] = 1.0;
        let y = gaussian_lpf(&imp, 5, 1.0).unwrap();
        let k = gaussian_kernel(5, 1.0).unwrap();
        for yy in 0..9 {
            for xx in 0..9 {
                let (dy, dx) = (yy as isize - 4, xx as isize - 4);
                let expect = if dy.abs() <= 2 && dx.abs() <= 2 {
                    k[(dy + 2) as usize] * k[(dx + 2) as usize]
                } else {
                    0.0
                };
                assert!((y.data()[yy * 9 + xx] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lpf_gradient() {
        let x = random_tensor(&[2, 6, 5], 17);
        let w = random_tensor(&[2, 6, 5], 18);
        check_grad(&x, move |t, x| {
            let y = t.gaussian_lpf(x, 5, 1.0).unwrap();
            let wv = t.constant(w.clone());
            let p = t.mul(y, wv).unwrap();
            t.sum(p)
        });
    }
}
