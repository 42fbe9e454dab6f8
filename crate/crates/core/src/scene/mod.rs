//! Procedural head proxy, UV rasterizer, reference shader, trajectories
//! and camera stabilization.

mod dataset;
mod frame;
mod proxy;
mod raster;
mod shade;
mod stabilize;
mod trajectory;
mod vec3;

pub use dataset::{decode_frame, encode_frame, Dataset, DatasetSpec, FRAME_MAGIC, MANIFEST};
pub use frame::{Frame, SceneRenderer, LANDMARK_SPAN};
pub use proxy::{deform_and_pose, head_forward, HeadProxy, EXPR_LIMIT};
pub use raster::{rasterize_uv, Camera, Intrinsics, UvMap};
pub use shade::{albedo, reference_render, Albedo, ShaderParams};
pub use stabilize::{stabilize_track, Framing, StabilizerState, STABILIZER_SIGMA, STABILIZER_TAPS};
pub use trajectory::{generate_trajectory, generate_trajectory_with, with_yaw_offset, FrameParams, MotionSpec};
