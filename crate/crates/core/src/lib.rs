//! Neural-cache rendering at desk scale.
//!
//! A deferred neural renderer samples a learned multi-scale texture through
//! rasterized UV maps and decodes it with a U-Net. Its last decoder feature
//! maps are cached at keyframes and a shallow warp head re-uses them to
//! produce the following frames cheaply. Sequential and parallel schedulers
//! interleave the two networks across worker threads.

pub mod error;
pub mod eval;
pub mod numerics;
pub mod params;
pub mod renderer;
pub mod scene;
pub mod scheduler;
pub mod training;
pub mod warp;

pub use error::{Error, Result};
pub use numerics::{AdamState, Scalar, Tape, Tensor, Var};
