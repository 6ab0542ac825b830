//! Model checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"LKMCKPT1"                 8-byte magic
//! u64 little-endian           header length in bytes
//! JSON header                 format version, model config, target standardizer,
//!                             parameter names and shapes in canonical order
//! f64 little-endian * N       flat parameters, canonical order
//! ```
//!
//! Loading then saving reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use lkm_core::{Model, ModelConfig, Standardizer, Tensor};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"LKMCKPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated: {0}")]
    Truncated(&'static str),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("checkpoint does not match its config: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] lkm_core::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigRecord {
    pub n_layers: usize,
    pub embedding_dim: usize,
    pub n_rbf: usize,
    pub cutoff: f64,
    pub n_element_types: usize,
    pub seed: u64,
}

impl From<&ModelConfig> for ConfigRecord {
    fn from(c: &ModelConfig) -> Self {
        Self {
            n_layers: c.n_layers,
            embedding_dim: c.embedding_dim,
            n_rbf: c.n_rbf,
            cutoff: c.cutoff,
            n_element_types: c.n_element_types,
            seed: c.seed,
        }
    }
}

impl From<&ConfigRecord> for ModelConfig {
    fn from(c: &ConfigRecord) -> Self {
        Self {
            n_layers: c.n_layers,
            embedding_dim: c.embedding_dim,
            n_rbf: c.n_rbf,
            cutoff: c.cutoff,
            n_element_types: c.n_element_types,
            seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Header {
    pub format_version: u32,
    pub config: ConfigRecord,
    pub seed: u64,
    pub target_mean: f64,
    pub target_std: f64,
    pub n_params: usize,
    pub parameters: Vec<ParamRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub standardizer: Standardizer,
}

pub fn to_bytes(model: &Model, standardizer: Standardizer) -> Result<Vec<u8>, CheckpointError> {
    let config = model.config();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: config.into(),
        seed: config.seed,
        target_mean: standardizer.mean,
        target_std: standardizer.std,
        n_params: model.count_parameters(),
        parameters: config
            .parameter_layout()
            .into_iter()
            .map(|(name, shape)| ParamRecord { name, shape })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let flat = model.flat_parameters();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let len_bytes: [u8; 8] = bytes
        .get(8..16)
        .ok_or(CheckpointError::Truncated("header length"))?
        .try_into()
        .unwrap();
    let header_len = usize::try_from(u64::from_le_bytes(len_bytes))
        .map_err(|_| CheckpointError::Truncated("header length"))?;
    let body_start = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or(CheckpointError::Truncated("header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body_start])?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    let config = ModelConfig::from(&header.config);
    config.validate()?;
    let layout = config.parameter_layout();
    let recorded: Vec<(String, Vec<usize>)> = header
        .parameters
        .iter()
        .map(|p| (p.name.clone(), p.shape.clone()))
        .collect();
    if recorded != layout {
        return Err(CheckpointError::Mismatch(
            "parameter names or shapes differ from the config's layout".into(),
        ));
    }
    if header.n_params != config.parameter_count() {
        return Err(CheckpointError::Mismatch(format!(
            "header says {} parameters, config implies {}",
            header.n_params,
            config.parameter_count()
        )));
    }
    let body = &bytes[body_start..];
    if body.len() != 8 * header.n_params {
        return Err(CheckpointError::Truncated("parameter block"));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut params = Vec::with_capacity(layout.len());
    for (_, shape) in layout {
        let n = shape.iter().product();
        params.push(Tensor::new(shape, values.by_ref().take(n).collect())?);
    }
    Ok(Checkpoint {
        model: Model::from_parameters(config, params)?,
        standardizer: Standardizer {
            mean: header.target_mean,
            std: header.target_std,
        },
    })
}

pub fn save(path: &Path, model: &Model, standardizer: Standardizer) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(model, standardizer)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    from_bytes(&fs::read(path)?)
}
