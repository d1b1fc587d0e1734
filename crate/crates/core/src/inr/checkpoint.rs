//! Checkpoints: a JSON manifest next to a flat little-endian `f32` blob.
//!
//! `model.json` lists every tensor with its shape and element offset into
//! `model.bin`; the blob is the concatenation of all tensors in manifest
//! order, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inr::model::{LocalInr, ModelConfig};
use crate::numerics::Tensor;

pub const FORMAT: &str = "freqinr-checkpoint";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in `f32` elements.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub seed: u64,
    /// Optimizer steps taken when the checkpoint was written.
    pub step: usize,
    pub config: ModelConfig,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Writes `<path>` (manifest) and `<path>.bin` (blob, extension swapped).
pub fn save(model: &LocalInr, step: usize, path: &Path) -> Result<()> {
    let blob = blob_path(path);
    let mut bytes = Vec::with_capacity(model.num_scalars() * 4);
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in model.params() {
        tensors.push(TensorEntry { name: name.clone(), shape: t.shape().to_vec(), offset });
        offset += t.len();
        for v in t.data() {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION.into(),
        seed: model.seed,
        step,
        config: model.config.clone(),
        blob: blob.file_name().expect("manifest path has a file name").to_string_lossy().into_owned(),
        tensors,
    };
    fs::write(&blob, bytes).map_err(|e| Error::io(&blob, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(LocalInr, Manifest)> {
    let bad = |detail: String| Error::Checkpoint { path: path.to_path_buf(), detail };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(bad(format!("unknown format `{}`", manifest.format)));
    }
    let blob = path.with_file_name(&manifest.blob);
    let bytes = fs::read(&blob).map_err(|e| Error::io(&blob, e))?;
    if bytes.len() % 4 != 0 {
        return Err(bad(format!("blob length {} is not a multiple of 4", bytes.len())));
    }
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let mut params = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let slice = floats
            .get(e.offset..e.offset + n)
            .ok_or_else(|| bad(format!("tensor {} exceeds the blob", e.name)))?;
        params.push((e.name.clone(), Tensor::new(e.shape.clone(), slice.iter().map(|&v| v as f64).collect())?));
    }
    let model = LocalInr::from_params(manifest.config.clone(), manifest.seed, params)?;
    Ok((model, manifest))
}
