//! Image metrics, compute accounting and evaluation harnesses.

mod ablation;
mod flops;
mod images;
mod metrics;
mod protocol;
mod sweep;
mod timing;

pub use ablation::{ablation_configs, run_ablation, AblationConfig, AblationRow, AblationTable, ABLATION_HEADER};
pub use flops::{affine_macs, conv_macs, count_flops, flop_ratio, CountFlops};
pub use images::{dump_frames, to_rgb8, write_png, write_ppm};
pub use metrics::{compute_metrics, psnr_from_mse, MetricsResult, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use protocol::{
    cache_assignment, evaluate_protocol, pipeline_capacity, render_scheduled, test_window, Protocol, ProtocolConfig,
    ProtocolResult, ProtocolSummary, YawBin,
};
pub use sweep::{linear_fit, warp_distance_sweep, LinearFit, SweepResult, SweepRow};
pub use timing::{generator_pass, time_networks, time_rasterization, warp_image, NetworkTimings};
