use crate::error::Result;
use crate::params::ParamStore;
use crate::renderer::{Generator, GeneratorConfig, NeuralTexture};
use crate::warp::{WarpConfig, WarpNet};

/// Architecture of the texture, generator and warp head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub texture_size: usize,
    pub warp: WarpConfig,
}

impl ModelConfig {
    pub fn new(generator: GeneratorConfig, texture_size: usize, expr_dims: usize) -> Self {
        let warp = WarpConfig::for_generator(&generator, expr_dims);
        Self { generator, texture_size, warp }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::new(GeneratorConfig::default(), 256, 4)
    }
}

/// Everything that is trained end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub texture: NeuralTexture,
    pub generator: Generator,
    pub warp: WarpNet,
}

pub const TEXTURE_PREFIX: &str = "texture/";
pub const GENERATOR_PREFIX: &str = "generator/";
pub const WARP_PREFIX: &str = "warp/";

impl Models {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            texture: NeuralTexture::new(config.generator.in_channels, config.texture_size, config.generator.seed)?,
            generator: Generator::new(config.generator.clone())?,
            warp: WarpNet::new(config.warp.clone())?,
        })
    }

    /// All parameters under their checkpoint names.
    pub fn to_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        s.extend_prefixed(TEXTURE_PREFIX, &self.texture.params);
        s.extend_prefixed(GENERATOR_PREFIX, &self.generator.params);
        s.extend_prefixed(WARP_PREFIX, &self.warp.params);
        s
    }

    /// Loads every parameter by name, failing on any missing, extra or
    /// reshaped entry.
    pub fn load_store(&mut self, store: &ParamStore) -> Result<()> {
        let mut all = self.to_store();
        all.load_from(store)?;
        self.texture.params.load_from(&all.strip_prefix(TEXTURE_PREFIX))?;
        self.generator.params.load_from(&all.strip_prefix(GENERATOR_PREFIX))?;
        self.warp.params.load_from(&all.strip_prefix(WARP_PREFIX))?;
        Ok(())
    }
}
