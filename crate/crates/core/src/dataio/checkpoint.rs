//! Self-contained checkpoint files: a JSON index (model spec, standardizer,
//! training snapshot, tensor names) followed by one `.knt` block per
//! parameter tensor.
//!
//! Layout: magic `KNC1`, u64 LE JSON length, the JSON index, then the
//! tensor blocks in index order, all f64.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::knt::{knt_bytes, parse_knt, KntDtype};
use crate::error::{Error, Result};
use crate::featurize::Standardizer;
use crate::fsio;
use crate::model::{ModelParams, ModelSpec};
use crate::train::{DataConfig, TrainingConfig};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"KNC1";

/// Checkpoint metadata; parameter payloads travel alongside as binary
/// blocks. Carries the standardizer so prediction needs no training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model_spec: ModelSpec,
    /// Node count the parameters were built for.
    pub n_base: usize,
    pub standardizer: Standardizer,
    pub train_config: TrainingConfig,
    pub data_config: DataConfig,
    pub best_val_loss: f64,
    pub best_train_loss: f64,
    pub best_epoch: usize,
    /// Tensor block order.
    pub tensor_names: Vec<String>,
}

pub fn save_checkpoint(path: &Path, meta: &Checkpoint, params: &ModelParams) -> Result<()> {
    let named = params.named_tensors();
    let mut meta = meta.clone();
    meta.version = CHECKPOINT_VERSION;
    meta.tensor_names = named.iter().map(|(n, _)| n.clone()).collect();

    let json = serde_json::to_vec(&meta).expect("checkpoint meta serialize");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &named {
        out.extend_from_slice(&knt_bytes(t, KntDtype::F64));
    }
    fsio::atomic_write(path, &out)
}

/// Loads and validates a checkpoint: version gate, then every tensor block
/// checked by name and shape against what the embedded model spec requires.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, ModelParams)> {
    let display = path.display().to_string();
    let bytes = fsio::read_bytes(path)?;
    let bad = |reason: &str| Error::ShapeHeaderInconsistency {
        path: display.clone(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let json_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + json_len {
        return Err(bad("truncated metadata"));
    }
    let meta: Checkpoint =
        serde_json::from_slice(&bytes[12..12 + json_len]).map_err(|e| Error::Json {
            path: display.clone(),
            source: e,
        })?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: meta.version,
            expected: CHECKPOINT_VERSION,
        });
    }

    let mut params = ModelParams::init(&meta.model_spec, meta.n_base)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    if meta.tensor_names.len() != expected.len() {
        return Err(bad(&format!(
            "checkpoint lists {} tensors, model spec requires {}",
            meta.tensor_names.len(),
            expected.len()
        )));
    }

    let mut offset = 12 + json_len;
    let mut loaded = Vec::with_capacity(expected.len());
    for (i, (name, shape)) in expected.iter().enumerate() {
        if meta.tensor_names[i] != *name {
            return Err(bad(&format!(
                "tensor {i} is `{}`, expected `{name}`",
                meta.tensor_names[i]
            )));
        }
        let (tensor, consumed) = parse_knt(&bytes[offset..], &display)?;
        if tensor.shape() != &shape[..] {
            return Err(Error::CheckpointShapeMismatch {
                name: name.clone(),
                found: tensor.shape().to_vec(),
                expected: shape.clone(),
            });
        }
        offset += consumed;
        loaded.push(tensor);
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after tensor blocks"));
    }
    params.replace_tensors(loaded);
    Ok((meta, params))
}
