//! Versioned checkpoint container: magic, format version, JSON metadata,
//! then named little-endian `f32` blobs with their dimensions.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use voice2face_tensor::Tensor;

use super::arch::Architecture;
use super::bundle::ModelBundle;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"V2FCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: Architecture,
    pub iteration: u64,
    pub embedder_frozen: bool,
    /// Resolved training settings, when written by a training run.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    pub code_version: String,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        if self.pos + n > self.bytes.len() {
            return Err(format!("truncated at byte {} (needed {n} more)", self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(bundle: &ModelBundle<f32>, config: Option<serde_json::Value>) -> Result<Vec<u8>> {
    let meta = CheckpointMeta {
        architecture: bundle.arch().clone(),
        iteration: bundle.iteration,
        embedder_frozen: bundle.embedder_frozen,
        config,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION as usize);
    put_u32(&mut out, json.len());
    out.extend_from_slice(&json);
    put_u32(&mut out, bundle.store.len());
    for (_, name, t) in bundle.store.iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<(ModelBundle<f32>, CheckpointMeta), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| "not a checkpoint file".to_string())? != CHECKPOINT_MAGIC {
        return Err("not a checkpoint file (bad magic)".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!(
            "checkpoint format version {version} is not supported (this build reads version {CHECKPOINT_VERSION})"
        ));
    }
    let len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(len)?).map_err(|e| format!("metadata: {e}"))?;
    let mut bundle = ModelBundle::<f32>::new(meta.architecture.clone(), 0).map_err(|e| e.to_string())?;
    let count = r.u32()? as usize;
    if count != bundle.store.len() {
        return Err(format!("{count} parameter blobs, architecture needs {}", bundle.store.len()));
    }
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?).map_err(|_| "parameter name is not UTF-8".to_string())?.to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let numel: usize = dims.iter().product();
        let data: Vec<f32> = r
            .take(4 * numel)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let id = bundle.store.find(&name).ok_or_else(|| format!("unknown parameter {name}"))?;
        if bundle.store.get(id).shape() != dims.as_slice() {
            return Err(format!("{name}: shape {dims:?}, expected {:?}", bundle.store.get(id).shape()));
        }
        let t = Tensor::new(dims, data).map_err(|e| format!("{name}: {e}"))?;
        if !t.is_finite() {
            return Err(format!("{name} contains non-finite values"));
        }
        *bundle.store.get_mut(id) = t;
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    bundle.iteration = meta.iteration;
    bundle.embedder_frozen = meta.embedder_frozen;
    Ok((bundle, meta))
}

/// Write through a temporary file so a crash never leaves a torn checkpoint.
pub fn save_checkpoint(path: &Path, bundle: &ModelBundle<f32>, config: Option<serde_json::Value>) -> Result<()> {
    let bytes = encode_checkpoint(bundle, config)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle<f32>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|message| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle() -> ModelBundle<f32> {
        let mut b = ModelBundle::new(Architecture::full(5).narrowed(32), 3).unwrap();
        b.iteration = 42;
        b.embedder_frozen = true;
        b
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let b = bundle();
        let bytes = encode_checkpoint(&b, Some(serde_json::json!({"lr": 2e-4}))).unwrap();
        let (back, meta) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(meta.iteration, 42);
        assert!(back.embedder_frozen);
        for ((_, na, ta), (_, nb, tb)) in b.store.iter().zip(back.store.iter()) {
            assert_eq!(na, nb);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(ta), bits(tb));
        }
        assert_eq!(encode_checkpoint(&back, meta.config).unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_name_the_version() {
        let mut bytes = encode_checkpoint(&bundle(), None).unwrap();
        bytes[8] = 7;
        assert!(decode_checkpoint(&bytes).unwrap_err().contains("version 7"));
        assert!(decode_checkpoint(b"garbage").is_err());
        let good = encode_checkpoint(&bundle(), None).unwrap();
        assert!(decode_checkpoint(&good[..good.len() - 3]).unwrap_err().contains("truncated"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &bundle(), None).unwrap();
        let (b, _) = load_checkpoint(&p).unwrap();
        assert_eq!(b.hash_params(&b.store.ids().collect::<Vec<_>>()), bundle().hash_params(&bundle().store.ids().collect::<Vec<_>>()));
    }
}
