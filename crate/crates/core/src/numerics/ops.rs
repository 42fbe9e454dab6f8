//! Elementwise, structural and reduction operations on a [`Tape`].

use crate::error::{Error, Result};

use super::{Scalar, Tape, Tensor, Var};

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!(
            "{op}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<'a, T: Scalar> Tape<'a, T> {
    fn unary(&self, x: Var, f: impl Fn(T) -> T, df: impl Fn(T) -> T + 'a) -> Var {
        let out = self.value(x).map(&f);
        self.push_op(out, &[x], move |g, vals, grads| {
            let xv = vals.get(x).data();
            if let Some(dx) = grads.slot(x) {
                for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xv) {
                    *d += gi * df(xi);
                }
            }
        })
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            same_shape(&av, &bv, "add")?;
            av.zip_map(&bv, |x, y| x + y)?
        };
        Ok(self.push_op(out, &[a, b], move |g, _, grads| {
            grads.add(a, g);
            grads.add(b, g);
        }))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            same_shape(&av, &bv, "sub")?;
            av.zip_map(&bv, |x, y| x - y)?
        };
        Ok(self.push_op(out, &[a, b], move |g, _, grads| {
            grads.add(a, g);
            if let Some(db) = grads.slot(b) {
                for (d, &gi) in db.iter_mut().zip(g) {
                    *d -= gi;
                }
            }
        }))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (av, bv) = (self.value(a), self.value(b));
            same_shape(&av, &bv, "mul")?;
            av.zip_map(&bv, |x, y| x * y)?
        };
        Ok(self.push_op(out, &[a, b], move |g, vals, grads| {
            let (av, bv) = (vals.get(a).data(), vals.get(b).data());
            if let Some(da) = grads.slot(a) {
                for ((d, &gi), &y) in da.iter_mut().zip(g).zip(bv) {
                    *d += gi * y;
                }
            }
            if let Some(db) = grads.slot(b) {
                for ((d, &gi), &x) in db.iter_mut().zip(g).zip(av) {
                    *d += gi * x;
                }
            }
        }))
    }

    pub fn scale(&self, x: Var, s: f64) -> Var {
        let s = T::of(s);
        self.unary(x, move |v| v * s, move |_| s)
    }

    pub fn square(&self, x: Var) -> Var {
        self.unary(x, |v| v * v, |v| v + v)
    }

    pub fn leaky_relu(&self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { v * s },
            move |v| if v > T::zero() { T::one() } else { s },
        )
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), |v| {
            let t = v.tanh();
            T::one() - t * t
        })
    }

    /// `(tanh(x) + 1) / 2`, mapping the real line into `(0, 1)`.
    pub fn squash01(&self, x: Var) -> Var {
        let half = T::of(0.5);
        self.unary(
            x,
            move |v| half * (v.tanh() + T::one()),
            move |v| {
                let t = v.tanh();
                half * (T::one() - t * t)
            },
        )
    }

    pub fn sum(&self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push_op(Tensor::scalar(s), &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
        })
    }

    pub fn mean(&self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Weighted sum of one-element nodes.
    pub fn weighted_sum(&self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = T::zero();
        for &(v, w) in terms {
            let t = self.value(v);
            if t.numel() != 1 {
                return Err(Error::usage("weighted_sum expects scalar terms"));
            }
            total += T::of(w) * t.data()[0];
        }
        let parents: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let weights: Vec<(Var, T)> = terms.iter().map(|&(v, w)| (v, T::of(w))).collect();
        Ok(self.push_op(Tensor::scalar(total), &parents, move |g, _, grads| {
            for &(v, w) in &weights {
                if let Some(d) = grads.slot(v) {
                    d[0] += g[0] * w;
                }
            }
        }))
    }

    /// Concatenates `C_i x H x W` tensors along the channel axis.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::config("concat of zero tensors"));
        }
        let mut sizes = Vec::with_capacity(parts.len());
        let (h, w) = {
            let first = self.value(parts[0]);
            let (_, h, w) = first.dims3()?;
            (h, w)
        };
        let mut data = Vec::new();
        let mut channels = 0;
        for &p in parts {
            let t = self.value(p);
            let (c, ph, pw) = t.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::config(format!(
                    "concat: spatial size {ph}x{pw} does not match {h}x{w}"
                )));
            }
            channels += c;
            sizes.push(t.numel());
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![channels, h, w], data)?;
        let parts = parts.to_vec();
        Ok(self.push_op(out, &parts.clone(), move |g, _, grads| {
            let mut off = 0;
            for (&p, &n) in parts.iter().zip(&sizes) {
                grads.add(p, &g[off..off + n]);
                off += n;
            }
        }))
    }

    /// Channels `start..end` of a `C x H x W` node.
    pub fn slice_channels(&self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (out, plane) = {
            let t = self.value(x);
            let (_, h, w) = t.dims3()?;
            (t.channels(start..end)?, h * w)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                for (d, &gi) in dx[start * plane..end * plane].iter_mut().zip(g) {
                    *d += gi;
                }
            }
        }))
    }

    /// Tiles an `m`-vector into an `m x h x w` map.
    pub fn broadcast_spatial(&self, v: Var, h: usize, w: usize) -> Var {
        let plane = h * w;
        let out = {
            let t = self.value(v);
            let m = t.numel();
            let mut data = Vec::with_capacity(m * plane);
            for &x in t.data() {
                data.extend(std::iter::repeat_n(x, plane));
            }
            Tensor::new(vec![m, h, w], data).expect("consistent shape")
        };
        self.push_op(out, &[v], move |g, _, grads| {
            if let Some(dv) = grads.slot(v) {
                for (i, d) in dv.iter_mut().enumerate() {
                    *d += g[i * plane..(i + 1) * plane].iter().copied().sum::<T>();
                }
            }
        })
    }

    /// Multiplies channel `offset + i` by `coeffs[i]`, broadcast spatially;
    /// all other channels pass through.
    pub fn modulate_channels(&self, x: Var, coeffs: Var, offset: usize) -> Result<Var> {
        let (out, plane, n) = {
            let (t, c) = (self.value(x), self.value(coeffs));
            let (ch, h, w) = t.dims3()?;
            let n = c.numel();
            if offset + n > ch {
                return Err(Error::config(format!(
                    "modulating channels {offset}..{} of a {ch}-channel map",
                    offset + n
                )));
            }
            let plane = h * w;
            let mut out = t.data().to_vec();
            for (i, &k) in c.data().iter().enumerate() {
                for v in &mut out[(offset + i) * plane..(offset + i + 1) * plane] {
                    *v *= k;
                }
            }
            (Tensor::new(t.shape().to_vec(), out)?, plane, n)
        };
        Ok(self.push_op(out, &[x, coeffs], move |g, vals, grads| {
            let (xv, cv) = (vals.get(x).data(), vals.get(coeffs).data());
            if let Some(dx) = grads.slot(x) {
                for (i, (d, &gi)) in dx.iter_mut().zip(g).enumerate() {
                    let ch = i / plane;
                    if ch >= offset && ch < offset + n {
                        *d += gi * cv[ch - offset];
                    } else {
                        *d += gi;
                    }
                }
            }
            if let Some(dc) = grads.slot(coeffs) {
                for (i, d) in dc.iter_mut().enumerate() {
                    let r = (offset + i) * plane..(offset + i + 1) * plane;
                    *d += g[r.clone()].iter().zip(&xv[r]).map(|(&a, &b)| a * b).sum::<T>();
                }
            }
        }))
    }

    /// Multiplies every channel by a constant `1 x H x W` mask.
    pub fn mask_pixels(&self, x: Var, mask: &Tensor<T>) -> Result<Var> {
        let (out, m) = {
            let t = self.value(x);
            let (c, h, w) = t.dims3()?;
            if mask.numel() != h * w {
                return Err(Error::config(format!(
                    "mask with {} values for a {h}x{w} map",
                    mask.numel()
                )));
            }
            let plane = h * w;
            let m = mask.data().to_vec();
            let mut out = t.data().to_vec();
            for ch in 0..c {
                for (v, &k) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(&m) {
                    *v *= k;
                }
            }
            (Tensor::new(t.shape().to_vec(), out)?, m)
        };
        Ok(self.push_op(out, &[x], move |g, _, grads| {
            if let Some(dx) = grads.slot(x) {
                let plane = m.len();
                for (i, (d, &gi)) in dx.iter_mut().zip(g).enumerate() {
                    *d += gi * m[i % plane];
                }
            }
        }))
    }

    /// `W x + b` for a vector `x` of length `n`, `W` of shape `m x n`.
    pub fn linear(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (out, m, n) = {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            let n = xv.numel();
            let (m, wn) = match wv.shape() {
                &[m, wn] => (m, wn),
                s => return Err(Error::config(format!("linear weight must be 2-D, got {s:?}"))),
            };
            if wn != n {
                return Err(Error::config(format!(
                    "linear: input has {n} features, weight expects {wn}"
                )));
            }
            if bv.numel() != m {
                return Err(Error::config(format!("linear: bias has {} entries, expected {m}", bv.numel())));
            }
            let mut out = bv.data().to_vec();
            T::gemm(m, n, 1, T::one(), wv.data(), false, xv.data(), false, T::one(), &mut out);
            (Tensor::new(vec![m], out)?, m, n)
        };
        Ok(self.push_op(out, &[x, w, b], move |g, vals, grads| {
            grads.add(b, g);
            if let Some(dw) = grads.slot(w) {
                let xv = vals.get(x).data();
                T::gemm(m, 1, n, T::one(), g, false, xv, false, T::one(), dw);
            }
            if let Some(dx) = grads.slot(x) {
                let wv = vals.get(w).data();
                T::gemm(n, m, 1, T::one(), wv, true, g, false, T::one(), dx);
            }
        }))
    }

    /// Mean absolute error between `pred` and `target`, both `C x H x W`.
    ///
    /// With a `1 x H x W` mask the mean runs over masked pixels only
    /// (every channel); an empty mask yields 0.
    pub fn l1_loss(&self, pred: Var, target: Var, mask: Option<&Tensor<T>>) -> Result<Var> {
        let (value, weights, denom) = {
            let (p, t) = (self.value(pred), self.value(target));
            same_shape(&p, &t, "l1_loss")?;
            let (c, h, w) = p.dims3()?;
            let plane = h * w;
            let weights: Option<Vec<T>> = match mask {
                Some(m) if m.numel() != plane => {
                    return Err(Error::config(format!(
                        "l1 mask has {} values for a {h}x{w} image",
                        m.numel()
                    )))
                }
                Some(m) => Some(m.data().to_vec()),
                None => None,
            };
            let denom = match &weights {
                Some(m) => m.iter().copied().sum::<T>() * T::of(c as f64),
                None => T::of(p.numel() as f64),
            };
            let mut acc = T::zero();
            for (i, (&a, &b)) in p.data().iter().zip(t.data()).enumerate() {
                let wgt = weights.as_ref().map_or(T::one(), |m| m[i % plane]);
                acc += wgt * (a - b).abs();
            }
            let value = if denom > T::zero() { acc / denom } else { T::zero() };
            (value, weights, denom)
        };
        Ok(self.push_op(Tensor::scalar(value), &[pred, target], move |g, vals, grads| {
            if denom <= T::zero() {
                return;
            }
            let (p, t) = (vals.get(pred).data(), vals.get(target).data());
            let plane = weights.as_ref().map_or(1, |m| m.len());
            let coef = |i: usize| -> T {
                let wgt = weights.as_ref().map_or(T::one(), |m| m[i % plane]);
                let d = p[i] - t[i];
                let s = if d > T::zero() {
                    T::one()
                } else if d < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                g[0] * wgt * s / denom
            };
            if let Some(dp) = grads.slot(pred) {
                for (i, d) in dp.iter_mut().enumerate() {
                    *d += coef(i);
                }
            }
            if let Some(dt) = grads.slot(target) {
                for (i, d) in dt.iter_mut().enumerate() {
                    *d -= coef(i);
                }
            }
        }))
    }
}
