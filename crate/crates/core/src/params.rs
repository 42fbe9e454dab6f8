//! Named parameter collections shared by the networks and checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{adam_step, AdamState, Gradients, Scalar, Tape, Tensor, Var};

/// Ordered list of named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor<f32>)>,
}

/// Tape handles of a [`ParamStore`], by insertion index.
#[derive(Debug, Clone)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn get(&self, idx: usize) -> Var {
        self.0[idx]
    }

    /// The same handles with slot `idx` pointing at `v`.
    pub fn with(mut self, idx: usize, v: Var) -> Self {
        self.0[idx] = v;
        self
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> usize {
        self.entries.push((name.into(), tensor.with_grad()));
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, idx: usize) -> &Tensor<f32> {
        &self.entries[idx].1
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Tensor<f32> {
        &mut self.entries[idx].1
    }

    pub fn find(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn bind<'a>(&'a self, tape: &Tape<'a, f32>) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| tape.param(t)).collect())
    }

    /// Binds converted copies on a tape of another precision.
    pub fn bind_cast<T: Scalar>(&self, tape: &Tape<'_, T>) -> Bound {
        Bound(self.entries.iter().map(|(_, t)| tape.variable(t.cast())).collect())
    }

    /// Folds tape gradients into each tensor's accumulator.
    pub fn accumulate(&mut self, grads: &Gradients<f32>, bound: &Bound) -> Result<()> {
        for ((_, t), &v) in self.entries.iter_mut().zip(&bound.0) {
            grads.accumulate_into(v, t)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in &mut self.entries {
            t.zero_grad();
        }
    }

    pub fn set_trainable(&mut self, on: bool) {
        for (_, t) in &mut self.entries {
            t.set_requires_grad(on);
        }
    }

    pub fn all_have_grads(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.grad().is_some())
    }

    /// Adam update over every tensor. Tensors that received no gradient
    /// are treated as having a zero gradient.
    pub fn adam_update(&mut self, state: &mut AdamState) -> Result<()> {
        for (_, t) in &mut self.entries {
            if t.grad().is_none() {
                let n = t.numel();
                t.accumulate_grad(&vec![0.0; n])?;
            }
        }
        let mut refs: Vec<&mut Tensor<f32>> = self.entries.iter_mut().map(|(_, t)| t).collect();
        adam_step(&mut refs, state)
    }

    /// Replaces every tensor's values with those of `other`, matching by
    /// name and shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if let Some(extra) = other.names().find(|n| self.find(n).is_none()) {
            return Err(Error::ParamMismatch { name: extra.to_string(), reason: "not a parameter of this model".into() });
        }
        for (name, t) in &mut self.entries {
            let src = other
                .find(name)
                .ok_or_else(|| Error::ParamMismatch { name: name.clone(), reason: "missing from checkpoint".into() })?;
            if src.shape() != t.shape() {
                return Err(Error::ParamMismatch {
                    name: name.clone(),
                    reason: format!("shape {:?} in checkpoint, {:?} expected", src.shape(), t.shape()),
                });
            }
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    /// Appends all entries of `other` with `prefix` prepended to their names.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamStore) {
        for (n, t) in other.iter() {
            self.entries.push((format!("{prefix}{n}"), t.clone()));
        }
    }

    /// Entries whose names start with `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamStore {
        ParamStore {
            entries: self
                .entries
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }
}

/// He-style uniform initializer for leaky-rectifier layers.
pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<f32> {
    let bound = (6.0 / (fan_in as f64 * (1.0 + 0.2 * 0.2))).sqrt() as f32;
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

pub(crate) fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A convolution's weight and bias slots plus geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvLayer {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let weight = store.add(format!("{name}.weight"), init_uniform(rng, vec![cout, cin, kernel, kernel], fan_in));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![cout]));
        Self { weight, bias, cin, cout, kernel, stride }
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn conv<'a, T: Scalar>(&self, tape: &Tape<'a, T>, b: &Bound, x: Var) -> Result<Var> {
        tape.conv2d(x, b.get(self.weight), Some(b.get(self.bias)), self.stride, self.pad())
    }

    pub fn upconv<'a, T: Scalar>(&self, tape: &Tape<'a, T>, b: &Bound, x: Var) -> Result<Var> {
        tape.upconv2x(x, b.get(self.weight), Some(b.get(self.bias)))
    }

    /// Zero-insertion upsampling followed by the convolution (transposed
    /// convolution).
    pub fn deconv<'a, T: Scalar>(&self, tape: &Tape<'a, T>, b: &Bound, x: Var) -> Result<Var> {
        let up = tape.zero_insert2x(x)?;
        tape.conv2d(up, b.get(self.weight), Some(b.get(self.bias)), 1, self.pad())
    }

    /// Multiply-accumulates for an output of `h x w` pixels.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        (self.cout * self.cin * self.kernel * self.kernel * h * w) as u64
    }
}
