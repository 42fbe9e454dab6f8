//! Dense tensors, reverse-mode differentiation and the layers built on it.

mod adam;
mod conv;
mod gradcheck;
mod ops;
mod scalar;
mod sh;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use conv::{conv2d, conv_out_size, gaussian_kernel, gaussian_lpf, grid_sample_bilinear, upconv2x};
pub use gradcheck::{finite_difference, random_tensor, GradCheck};
pub use scalar::{Scalar, View};
pub use sh::sh_basis9;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use gradcheck::testing;
