//! Checkpoints: a binary weight file plus a JSON sidecar at `<path>.json`.
//!
//! Weight file layout (little endian): magic `RKW1`, `u32` tensor count, then
//! per tensor a `u32` name length, the UTF-8 name, a `u32` rank, `u64` dims and
//! the `f32` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Unet};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"RKW1";

/// Portable description of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub model_config: ModelConfig,
    pub train_config: serde_json::Value,
    pub epoch: usize,
    pub phase: String,
    pub seed: u64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_weights(net: &Unet<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * net.parameter_count() + 64 * net.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::CheckpointMismatch("truncated weight file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Loads weights into a freshly built network, checking names and shapes.
pub fn decode_weights(bytes: &[u8], config: &ModelConfig) -> Result<Unet<f32>> {
    let mismatch = |m: String| Error::CheckpointMismatch(m);
    let mut net = Unet::<f32>::build(config, 0)?;
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(mismatch("not a weight file".into()));
    }
    let count = r.u32()? as usize;
    if count != net.params().len() {
        return Err(mismatch(format!("{count} tensors, model has {}", net.params().len())));
    }
    for p in net.params_mut() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| mismatch("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != p.name || shape != p.shape {
            return Err(mismatch(format!("tensor {name} {shape:?} where model expects {} {:?}", p.name, p.shape)));
        }
        let raw = r.take(4 * p.data.len())?;
        for (v, chunk) in p.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(mismatch("trailing bytes after last tensor".into()));
    }
    Ok(net)
}

pub fn save_checkpoint(path: &Path, net: &Unet<f32>, sidecar: &Sidecar) -> Result<()> {
    if &sidecar.model_config != net.config() {
        return Err(Error::CheckpointMismatch("sidecar model config differs from the network".into()));
    }
    crate::io::write_atomic(path, &encode_weights(net))?;
    crate::io::write_json(&sidecar_path(path), sidecar)
}

pub fn load_checkpoint(path: &Path) -> Result<(Unet<f32>, Sidecar)> {
    let sidecar: Sidecar = crate::io::read_json(&sidecar_path(path))?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let net = decode_weights(&bytes, &sidecar.model_config)?;
    Ok((net, sidecar))
}
