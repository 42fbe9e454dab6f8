//! Flat `key=value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use neural_cache::eval::{Protocol, ProtocolConfig};
use neural_cache::renderer::GeneratorConfig;
use neural_cache::scene::{DatasetSpec, MotionSpec};
use neural_cache::scheduler::{Durations, Mode, SchedulerConfig};
use neural_cache::training::{LossMode, LossWeights, ModelConfig, TrainConfig};

/// Values that can appear on the right of `key=`.
pub trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u32, u64, f64, String, Protocol);

impl Value for bool {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(format!("expected true or false, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for Mode {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|e: neural_cache::Error| e.to_string())
    }
    fn show(&self) -> String {
        match self {
            Mode::Sequential => "sequential".into(),
            Mode::Parallel => "parallel".into(),
        }
    }
}

impl Value for LossMode {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(LossMode::Baseline),
            "warp" => Ok(LossMode::Warp),
            _ => Err(format!("expected baseline or warp, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        match self {
            LossMode::Baseline => "baseline".into(),
            LossMode::Warp => "warp".into(),
        }
    }
}

/// Worker backend of the `bench` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sleep,
    Model,
}

impl Value for Backend {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "sleep" => Ok(Backend::Sleep),
            "model" => Ok(Backend::Model),
            _ => Err(format!("expected sleep or model, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        match self {
            Backend::Sleep => "sleep".into(),
            Backend::Model => "model".into(),
        }
    }
}

macro_rules! run_config {
    ($($key:ident: $t:ty = $default:expr, $doc:literal;)*) => {
        /// Every tunable of a run.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(pub $key: $t,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        impl RunConfig {
            /// `(key, description)` of every setting, in file order.
            pub const KEYS: &'static [(&'static str, &'static str)] = &[$((stringify!($key), $doc),)*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($key) => {
                        self.$key = <$t as Value>::parse_value(value.trim())
                            .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))?;
                    })*
                    _ => bail!("unknown configuration key `{key}`"),
                }
                Ok(())
            }

            /// The configuration as a loadable `key=value` file.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $(writeln!(s, "{}={}", stringify!($key), <$t as Value>::show(&self.$key)).expect("string write");)*
                s
            }
        }
    };
}

run_config! {
    seed: u64 = 7, "scene and trajectory seed";
    frames: usize = 512, "number of frames generated";
    fps: u32 = 30, "capture rate (30 or 60)";
    jitter: f64 = 0.0, "std of per-frame capture noise";
    height: usize = 64, "frame height in pixels";
    width: usize = 64, "frame width in pixels";
    k: usize = 4, "expression dimensions";
    data: String = String::new(), "dataset directory to load; empty generates from the scene keys";
    texture_channels: usize = 16, "neural texture feature channels";
    texture_size: usize = 256, "side of the finest texture level";
    depth: usize = 10, "generator layers (encoder plus decoder)";
    base: usize = 32, "generator base channel count";
    use_upconv: bool = true, "decode with upsample + convolution";
    use_lpf: bool = true, "low-pass filter the bottleneck";
    model_seed: u64 = 1, "initialization seed of the networks";
    checkpoint: String = String::new(), "checkpoint to load";
    loss_mode: LossMode = LossMode::Warp, "baseline or warp";
    epochs: usize = 30, "training epochs";
    batch_size: usize = 2, "training batch size";
    lr_nets: f64 = 1e-4, "learning rate of the generator and warp head";
    lr_texture: f64 = 1e-3, "learning rate of the neural texture";
    train_seed: u64 = 0, "shuffling and crop seed";
    crop_fraction: f64 = 0.75, "side of random training crops relative to the frame";
    curriculum_fraction: f64 = 0.2, "leading fraction of epochs without the warp head";
    w_tex: f64 = 1.0, "texture loss weight";
    w_img: f64 = 1.0, "image loss weight";
    w_perceptual: f64 = 0.1, "perceptual loss weight";
    w_warp_base: f64 = 0.1, "weight of the generator image loss in warp mode";
    test_fraction: f64 = 0.2, "trailing fraction held out for testing";
    protocol: Protocol = Protocol::Offline, "offline, online-30, online-60 or novel-view";
    drop_frames: bool = true, "drop frames beyond pipeline capacity in online protocols";
    mode: Mode = Mode::Parallel, "scheduler mode: sequential or parallel";
    num_warps: usize = 2, "warped frames per cache refresh";
    workers: usize = 2, "worker threads in parallel mode";
    input_fps: f64 = 0.0, "input frame rate; 0 feeds frames as fast as accepted";
    tg_ms: f64 = 47.02, "simulated generator duration";
    tw_ms: f64 = 14.62, "simulated warp duration";
    tsync_ms: f64 = 0.25, "simulated queue delivery delay";
    backend: Backend = Backend::Sleep, "bench workers: sleep or model";
    bench_frames: usize = 120, "frames streamed by bench and simulate";
    d_max: usize = 5, "largest warp distance of sweep-warp";
    ablation_epochs: usize = 10, "warp-head epochs per ablation row";
    out: String = String::new(), "output directory";
}

impl RunConfig {
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{}:{}", path.display(), n + 1))?;
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }

    /// Sequential mode, or a single worker, runs everything on one thread.
    pub fn effective_workers(&self) -> usize {
        if self.mode == Mode::Sequential {
            1
        } else {
            self.workers.max(1)
        }
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            seed: self.seed,
            frames: self.frames,
            fps: self.fps,
            jitter: self.jitter,
            height: self.height,
            width: self.width,
            motion: MotionSpec { k: self.k, ..MotionSpec::default() },
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let generator = GeneratorConfig {
            in_channels: self.texture_channels,
            base: self.base,
            depth: self.depth,
            use_upconv: self.use_upconv,
            use_lpf: self.use_lpf,
            seed: self.model_seed,
            ..GeneratorConfig::default()
        };
        ModelConfig::new(generator, self.texture_size, self.k)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_nets: self.lr_nets,
            lr_texture: self.lr_texture,
            batch_size: self.batch_size,
            seed: self.train_seed,
            crop_fraction: self.crop_fraction,
            curriculum_fraction: self.curriculum_fraction,
            weights: LossWeights {
                tex: self.w_tex,
                img: self.w_img,
                perceptual: self.w_perceptual,
                warp_base_img: self.w_warp_base,
            },
            ..TrainConfig::default()
        }
    }

    pub fn durations(&self) -> Durations {
        Durations { tg_ms: self.tg_ms, tw_ms: self.tw_ms, tsync_ms: self.tsync_ms }
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        let cfg = match self.effective_workers() {
            1 => SchedulerConfig::sequential(self.num_warps),
            n => SchedulerConfig::parallel(n, self.num_warps),
        };
        cfg.with_input_fps((self.input_fps > 0.0).then_some(self.input_fps))
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            num_warps: self.num_warps,
            n_workers: self.effective_workers(),
            durations: self.durations(),
            drop_frames: self.drop_frames,
            test_fraction: self.test_fraction,
            ..ProtocolConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let mut a = RunConfig::default();
        a.set("num_warps", "3").unwrap();
        a.set("protocol", "online-60").unwrap();
        a.set("mode", "sequential").unwrap();
        let mut b = RunConfig::default();
        for line in a.to_text().lines() {
            let (k, v) = line.split_once('=').unwrap();
            b.set(k, v).unwrap();
        }
        assert_eq!(a, b);
        assert_eq!(RunConfig::KEYS.len(), a.to_text().lines().count());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.set("learning_rate", "1").unwrap_err().to_string().contains("unknown"));
        assert!(c.set("epochs", "many").is_err());
        assert!(c.set("drop_frames", "maybe").is_err());
    }

    #[test]
    fn sequential_mode_uses_one_worker() {
        let mut c = RunConfig::default();
        c.set("mode", "sequential").unwrap();
        assert_eq!(c.effective_workers(), 1);
        assert_eq!(c.scheduler().n_workers, 1);
        assert_eq!(c.protocol_config().n_workers, 1);
        let mut one = RunConfig::default();
        one.set("workers", "1").unwrap();
        assert_eq!(one.scheduler().mode, Mode::Sequential);
    }
}
