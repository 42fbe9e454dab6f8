#![allow(dead_code)]

use neural_cache::renderer::GeneratorConfig;
use neural_cache::scene::{Dataset, DatasetSpec, Frame};
use neural_cache::training::{ModelConfig, Models};

/// 32x32 capture; small enough for per-test generation.
pub fn tiny_spec(frames: usize) -> DatasetSpec {
    DatasetSpec { frames, height: 32, width: 32, ..DatasetSpec::default() }
}

pub fn tiny_frames(frames: usize) -> Vec<Frame> {
    Dataset::generate(&tiny_spec(frames)).unwrap().frames
}

pub fn tiny_config() -> ModelConfig {
    let gen = GeneratorConfig { base: 8, depth: 6, ..GeneratorConfig::default() };
    ModelConfig::new(gen, 32, 4)
}

pub fn tiny_models() -> Models {
    Models::new(&tiny_config()).unwrap()
}

pub mod oracle;
pub mod suite;
