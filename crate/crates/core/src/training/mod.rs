//! Losses, the joint training loop and checkpoints.

mod checkpoint;
mod losses;
mod models;
mod train;

pub use checkpoint::{decode_store, encode_store, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use losses::{
    compute_losses, loss_on_tape, FeatureExtractor, LossBreakdown, LossInputs, LossMode, LossWeights,
};
pub use models::{ModelConfig, Models, GENERATOR_PREFIX, TEXTURE_PREFIX, WARP_PREFIX};
pub use train::{
    crop_frame, train, train_step, train_warp_head, Crop, EpochLog, Optimizers, Sample, TrainConfig, LOG_HEADER,
};
