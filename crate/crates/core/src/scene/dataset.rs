//! Binary frame records plus a text manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::frame::{Frame, SceneRenderer};
use super::proxy::HeadProxy;
use super::raster::UvMap;
use super::trajectory::{generate_trajectory_with, FrameParams, MotionSpec};

pub const FRAME_MAGIC: &[u8; 4] = b"NCR1";
pub const MANIFEST: &str = "manifest.txt";

/// Settings of a synthetic capture.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub seed: u64,
    pub frames: usize,
    pub fps: u32,
    pub jitter: f64,
    pub height: usize,
    pub width: usize,
    pub motion: MotionSpec,
}

impl DatasetSpec {
    pub fn trajectory(&self) -> Result<Vec<FrameParams>> {
        generate_trajectory_with(&self.motion, self.seed, self.frames, self.fps, self.jitter)
    }

    pub fn renderer(&self) -> Result<SceneRenderer> {
        Ok(SceneRenderer::new(HeadProxy::grid_sphere(20, 20, self.motion.k)?, self.height, self.width))
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { seed: 7, frames: 512, fps: 30, jitter: 0.0, height: 64, width: 64, motion: MotionSpec::default() }
    }
}

/// An ordered sequence of rendered frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub fps: u32,
    pub jitter: f64,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        let track = spec.trajectory()?;
        Ok(Self { seed: spec.seed, fps: spec.fps, jitter: spec.jitter, frames: spec.renderer()?.render_sequence(&track) })
    }

    /// Settings that regenerate this dataset with the default motion.
    pub fn spec(&self) -> DatasetSpec {
        let (height, width, k) = match self.frames.first() {
            Some(f) => (f.height(), f.width(), f.params.expr.len()),
            None => (0, 0, MotionSpec::default().k),
        };
        DatasetSpec {
            seed: self.seed,
            frames: self.frames.len(),
            fps: self.fps,
            jitter: self.jitter,
            height,
            width,
            motion: MotionSpec { k, ..MotionSpec::default() },
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Contiguous split: the first `train_fraction` of frames and the rest.
    pub fn split(&self, train_fraction: f64) -> (&[Frame], &[Frame]) {
        let n = ((self.frames.len() as f64) * train_fraction).round() as usize;
        self.frames.split_at(n.min(self.frames.len()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let (h, w, k) = match self.frames.first() {
            Some(f) => (f.height(), f.width(), f.params.expr.len()),
            None => (0, 0, 0),
        };
        let manifest = format!(
            "frames={}\nfps={}\nseed={}\njitter={}\nheight={h}\nwidth={w}\nk={k}\n",
            self.frames.len(),
            self.fps,
            self.seed,
            self.jitter
        );
        let path = dir.join(MANIFEST);
        fs::write(&path, manifest).map_err(|e| Error::file(&path, e))?;
        for f in &self.frames {
            let path = frame_path(dir, f.t());
            let mut file = fs::File::create(&path).map_err(|e| Error::file(&path, e))?;
            file.write_all(&encode_frame(f)).map_err(|e| Error::file(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        let field = |key: &str| -> Result<u64> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .and_then(|(_, v)| v.trim().parse().ok())
                .ok_or_else(|| Error::Format { path: path.clone(), reason: format!("missing or invalid `{key}`") })
        };
        let n = field("frames")? as usize;
        let fps = field("fps")? as u32;
        let seed = field("seed")?;
        let jitter = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "jitter")
            .map(|(_, v)| v.trim().parse::<f64>())
            .transpose()
            .map_err(|_| Error::Format { path: path.clone(), reason: "invalid `jitter`".into() })?
            .unwrap_or(0.0);
        let frames = (0..n)
            .map(|t| {
                let p = frame_path(dir, t);
                let bytes = fs::read(&p).map_err(|e| Error::file(&p, e))?;
                decode_frame(&bytes, t, &p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { seed, fps, jitter, frames })
    }
}

fn frame_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("frame_{t:05}.ncr"))
}

pub fn encode_frame(f: &Frame) -> Vec<u8> {
    let (h, w, k) = (f.height(), f.width(), f.params.expr.len());
    let mut out = Vec::with_capacity(16 + 4 * (6 * h * w + 9 + k));
    out.extend_from_slice(FRAME_MAGIC);
    for v in [h, w, k] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let floats = f
        .uv
        .uv
        .data()
        .iter()
        .chain(f.uv.mask.data())
        .chain(f.image.data())
        .copied()
        .chain(f.params.theta.iter().map(|&v| v as f32))
        .chain(f.params.expr.iter().map(|&v| v as f32))
        .chain(f.params.cam.iter().map(|&v| v as f32));
    for v in floats {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_frame(bytes: &[u8], t: usize, path: &Path) -> Result<Frame> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if bytes.len() < 16 {
        return Err(bad("record shorter than its header".into()));
    }
    if &bytes[..4] != FRAME_MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (h, w, k) = (u(0), u(1), u(2));
    let plane = h * w;
    let count = 6 * plane + 6 + k + 3;
    if bytes.len() != 16 + 4 * count {
        return Err(bad(format!("expected {} bytes for {h}x{w}, k={k}, found {}", 16 + 4 * count, bytes.len())));
    }
    let vals: Vec<f32> =
        bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    let mut at = 0;
    let mut take = |n: usize| {
        let s = &vals[at..at + n];
        at += n;
        s.to_vec()
    };
    let uv = Tensor::new(vec![2, h, w], take(2 * plane))?;
    let mask = Tensor::new(vec![1, h, w], take(plane))?;
    let image = Tensor::new(vec![3, h, w], take(3 * plane))?;
    let to64 = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let theta: [f64; 6] = to64(take(6)).try_into().expect("6 values");
    let expr = to64(take(k));
    let cam: [f64; 3] = to64(take(3)).try_into().expect("3 values");
    let params = FrameParams { t, theta, expr, cam };
    Ok(Frame { h_obj: params.h_obj(), params, uv: UvMap { uv, mask }, image })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let spec = DatasetSpec { frames: 3, height: 16, width: 16, ..DatasetSpec::default() };
        let ds = Dataset::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in ds.frames.iter().zip(&back.frames) {
            assert_eq!(a.uv, b.uv);
            assert_eq!(a.image, b.image);
            for (x, y) in a.params.theta.iter().zip(&b.params.theta) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let spec = DatasetSpec { frames: 1, height: 16, width: 16, ..DatasetSpec::default() };
        let ds = Dataset::generate(&spec).unwrap();
        let mut bytes = encode_frame(&ds.frames[0]);
        bytes[0] = b'X';
        assert!(decode_frame(&bytes, 0, Path::new("x")).is_err());
        let bytes = encode_frame(&ds.frames[0]);
        assert!(decode_frame(&bytes[..bytes.len() - 1], 0, Path::new("x")).is_err());
    }
}
