//! Binary checkpoint: magic, version, then named `f32` blocks to EOF.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::params::ParamStore;

use super::Models;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"NCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_store(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
    path: &'b Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, context: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated { path: self.path.to_path_buf(), context: context.to_string() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_store(bytes: &[u8], path: &Path) -> Result<ParamStore> {
    let mut r = Reader { bytes, pos: 0, path };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), found: magic });
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch { path: path.to_path_buf(), found: version, expected: CHECKPOINT_VERSION });
    }
    let mut store = ParamStore::new();
    while r.pos < bytes.len() {
        let len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(len, "name")?.to_vec())
            .map_err(|_| Error::Format { path: path.to_path_buf(), reason: "parameter name is not UTF-8".into() })?;
        let rank = r.u32(&format!("rank of `{name}`"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&format!("shape of `{name}`"))? as usize);
        }
        let n: usize = shape.iter().product();
        let data = r
            .take(4 * n, &format!("values of `{name}`"))?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        store.add(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

pub fn save_checkpoint(models: &Models, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, encode_store(&models.to_store())).map_err(|e| Error::file(path, e))
}

/// Reads a checkpoint into `models`; on error `models` is left unchanged.
pub fn load_checkpoint(models: &mut Models, path: &Path) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    let store = decode_store(&bytes, path)?;
    let mut staged = models.clone();
    staged.load_store(&store)?;
    *models = staged;
    Ok(())
}
