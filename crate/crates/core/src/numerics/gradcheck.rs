//! Central finite-difference checks for tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// `max |analytic - numeric| / max(max |numeric|, 1e-6)`.
    pub rel_error: f64,
    pub max_numeric: f64,
}

/// Uniform `[-1, 1)` tensor from a fixed seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Compares the tape gradient of `f` at `x` against central differences
/// with step `h`. `f` must map its input to a one-element node.
pub fn finite_difference<F>(x: &Tensor<f64>, h: f64, f: F) -> GradCheck
where
    F: for<'t> Fn(&Tape<'t, f64>, Var) -> Var,
{
    let eval = |t: &Tensor<f64>| -> f64 {
        let tape = Tape::no_grad();
        let v = tape.constant(t.clone());
        let out = f(&tape, v);
        tape.item(out)
    };
    let analytic = {
        let leaf = x.clone().with_grad();
        let tape = Tape::new();
        let v = tape.param(&leaf);
        let out = f(&tape, v);
        let g = tape.backward(out).expect("scalar output");
        g.get(v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()])
    };
    let mut probe = x.clone();
    let mut max_err: f64 = 0.0;
    let mut max_num: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe);
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        max_err = max_err.max((numeric - a).abs());
        max_num = max_num.max(numeric.abs());
    }
    GradCheck { rel_error: max_err / max_num.max(1e-6), max_numeric: max_num }
}

#[cfg(test)]
pub(crate) mod testing {
    pub(crate) use super::random_tensor;
    use super::*;

    /// Asserts the relative gradient error is below 1e-3.
    pub(crate) fn check_grad<F>(x: &Tensor<f64>, f: F)
    where
        F: for<'t> Fn(&Tape<'t, f64>, Var) -> Var,
    {
        let r = finite_difference(x, 1e-5, f);
        assert!(r.rel_error < 1e-3, "gradient check failed: {r:?}");
    }
}
