//! Fixtures shared by the criterion benchmarks.

use neural_cache::scene::{Dataset, DatasetSpec, Frame};
use neural_cache::training::{ModelConfig, Models};

/// Two consecutive frames at `side`×`side` and default untrained models.
pub fn fixture(side: usize) -> (Models, Vec<Frame>) {
    let spec = DatasetSpec { frames: 2, height: side, width: side, ..DatasetSpec::default() };
    let frames = Dataset::generate(&spec).expect("dataset").frames;
    let models = Models::new(&ModelConfig::default()).expect("models");
    (models, frames)
}
