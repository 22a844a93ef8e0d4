//! `<stem>.bin` holds every parameter as little-endian f64 in tensor order;
//! `<stem>.json` names the tensors and carries the model configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CnnConfig, CnnModel, TensorInfo};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: CnnConfig,
    pub tensors: Vec<TensorInfo>,
    pub data_file: String,
    pub n_params: usize,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the manifest path.
pub fn save(model: &CnnModel, stem: &Path) -> Result<PathBuf> {
    let (bin, json) = paths(stem);
    let mut bytes = Vec::with_capacity(8 * model.params.len());
    for p in &model.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(&bin, bytes)?;
    let manifest = Manifest {
        config: model.config.clone(),
        tensors: model.tensors.clone(),
        data_file: bin
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::input("checkpoint stem has no file name"))?
            .to_string(),
        n_params: model.params.len(),
    };
    fs::write(&json, serde_json::to_string_pretty(&manifest)?)?;
    Ok(json)
}

/// Load from a manifest path; the data file is resolved next to it.
pub fn load(manifest_path: &Path) -> Result<CnnModel> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let bin = manifest_path.with_file_name(&manifest.data_file);
    let bytes = fs::read(&bin)?;
    if bytes.len() != 8 * manifest.n_params {
        return Err(Error::Dimension {
            what: "checkpoint data bytes",
            expected: 8 * manifest.n_params,
            got: bytes.len(),
        });
    }
    let mut model = CnnModel::zeroed(manifest.config)?;
    if model.tensors != manifest.tensors {
        return Err(Error::input(
            "checkpoint tensor layout does not match its configuration",
        ));
    }
    for (p, chunk) in model.params.iter_mut().zip(bytes.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::input("checkpoint contains non-finite parameters"));
    }
    Ok(model)
}
