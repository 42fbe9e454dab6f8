//! Adam with bias correction.

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Optimizer state for one ordered group of parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First and second moment accumulators of parameter `i`.
    pub fn moments(&self, i: usize) -> Option<(&[f64], &[f64])> {
        Some((self.m.get(i)?.as_slice(), self.v.get(i)?.as_slice()))
    }
}

/// One Adam update of `params` from their accumulated gradients.
///
/// The parameter list must keep the same order and shapes between calls.
/// Gradients are left untouched.
pub fn adam_step<T: Scalar>(params: &mut [&mut Tensor<T>], state: &mut AdamState) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::config(format!(
            "optimizer tracks {} parameters, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if state.m[i].len() != p.numel() {
            return Err(Error::config(format!(
                "parameter {i} has {} values, optimizer state has {}",
                p.numel(),
                state.m[i].len()
            )));
        }
        if p.grad().is_none() {
            return Err(Error::usage(format!("parameter {i} {:?} has no gradient", p.shape())));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g: Vec<f64> = p.grad().expect("checked above").iter().map(|g| g.as_f64()).collect();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *w -= T::of(state.lr * mhat / (vhat.sqrt() + state.eps));
        }
    }
    Ok(())
}
