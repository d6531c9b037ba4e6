//! Model checkpoints.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "RGVAECKP"
//! version      u32       1
//! input_dim    u32
//! hidden[0]    u32
//! hidden[1]    u32
//! latent_dim   u32
//! param_count  u64
//! params       f64 * param_count, layers in Architecture::LAYER_NAMES order,
//!              each as its weight (outputs x inputs, row-major) then bias
//! ```
//!
//! A JSON sidecar at `<checkpoint>.json` records the architecture, the
//! training configuration and the SHA-256 of the binary file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::vae::{Architecture, LossBreakdown, TrainConfig, VaeModel};

pub const MAGIC: &[u8; 8] = b"RGVAECKP";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated or padded: expected {expected} bytes, found {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("checkpoint declares {declared} parameters but its architecture has {expected}")]
    ParamCount { declared: u64, expected: usize },
    #[error("checkpoint contains a non-finite parameter at {0}")]
    NonFinite(usize),
    #[error("sidecar: {0}")]
    Sidecar(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.display().to_string(), source }
}

/// Metadata stored next to the binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub architecture: Architecture,
    pub parameter_count: usize,
    pub layer_order: Vec<String>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    #[serde(default)]
    pub corpus_source: Option<String>,
    #[serde(default)]
    pub final_train_loss: Option<LossBreakdown>,
    #[serde(default)]
    pub test_loss: Option<LossBreakdown>,
    pub checkpoint_sha256: String,
}

/// Training details to record in the sidecar.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingMeta {
    pub train_config: Option<TrainConfig>,
    pub corpus_source: Option<String>,
    pub final_train_loss: Option<LossBreakdown>,
    pub test_loss: Option<LossBreakdown>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(model: &VaeModel) -> Vec<u8> {
    let arch = model.architecture();
    let params = model.params();
    let mut out = Vec::with_capacity(HEADER_LEN + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for dim in [arch.input_dim, arch.hidden[0], arch.hidden[1], arch.latent_dim] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<VaeModel, CheckpointError> {
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::BadLength { expected: HEADER_LEN, actual: bytes.len() });
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let arch = Architecture {
        input_dim: u32_at(12) as usize,
        hidden: [u32_at(16) as usize, u32_at(20) as usize],
        latent_dim: u32_at(24) as usize,
    };
    let declared = u64::from_le_bytes(bytes[28..36].try_into().unwrap());
    let expected = arch.parameter_count();
    if declared != expected as u64 {
        return Err(CheckpointError::ParamCount { declared, expected });
    }
    let total = HEADER_LEN + expected * 8;
    if bytes.len() != total {
        return Err(CheckpointError::BadLength { expected: total, actual: bytes.len() });
    }
    let params: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(CheckpointError::NonFinite(i));
    }
    Ok(VaeModel::from_params(arch, params).expect("length checked above"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the checkpoint and its sidecar, returning the sidecar contents.
pub fn save(model: &VaeModel, path: impl AsRef<Path>, meta: &TrainingMeta) -> Result<Sidecar, CheckpointError> {
    let path = path.as_ref();
    let bytes = encode(model);
    fs::write(path, &bytes).map_err(io_err(path))?;
    let arch = model.architecture();
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        architecture: arch,
        parameter_count: arch.parameter_count(),
        layer_order: Architecture::LAYER_NAMES.iter().map(|s| s.to_string()).collect(),
        train_config: meta.train_config,
        corpus_source: meta.corpus_source.clone(),
        final_train_loss: meta.final_train_loss,
        test_loss: meta.test_loss,
        checkpoint_sha256: sha256_hex(&bytes),
    };
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(&sidecar)?;
    json.push('\n');
    fs::write(&side, json).map_err(io_err(&side))?;
    Ok(sidecar)
}

/// Loads a checkpoint. The sidecar is optional; when missing, one is
/// reconstructed from the binary header.
pub fn load(path: impl AsRef<Path>) -> Result<(VaeModel, Sidecar), CheckpointError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let model = decode(&bytes)?;
    let side = sidecar_path(path);
    let sidecar = match fs::read_to_string(&side) {
        Ok(text) => {
            let mut s: Sidecar = serde_json::from_str(&text)?;
            s.checkpoint_sha256 = sha256_hex(&bytes);
            s
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let arch = model.architecture();
            Sidecar {
                format_version: FORMAT_VERSION,
                architecture: arch,
                parameter_count: arch.parameter_count(),
                layer_order: Architecture::LAYER_NAMES.iter().map(|s| s.to_string()).collect(),
                train_config: None,
                corpus_source: None,
                final_train_loss: None,
                test_loss: None,
                checkpoint_sha256: sha256_hex(&bytes),
            }
        }
        Err(e) => return Err(io_err(&side)(e)),
    };
    Ok((model, sidecar))
}
