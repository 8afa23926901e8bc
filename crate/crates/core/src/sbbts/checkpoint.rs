//! Checkpoint container:
//!
//! ```text
//! b"SBBTSCKP" | version: u32 LE | header_len: u64 LE | header (JSON) | payload (f64 LE)
//! ```
//!
//! The header holds the config, β, grid, scaler, architecture, initial
//! values and a parameter index of `(name, shape, offset)` into the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::SBBTSConfig;
use super::model::{Architecture, DriftNet};
use super::scaler::ScalerState;
use super::train::TrainedModel;
use crate::error::{Error, Result};
use crate::numerics::{ParamSet, Tensor};
use crate::stochastic::TimeGrid;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SBBTSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: SBBTSConfig,
    beta: f64,
    grid: TimeGrid,
    grid_fingerprint: String,
    scaler: ScalerState,
    architecture: Architecture,
    dim_names: Vec<String>,
    initial_values: Vec<f64>,
    noise_factors: Option<Vec<Vec<f64>>>,
    params: Vec<ParamEntry>,
}

pub fn checkpoint_to_bytes(model: &TrainedModel) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, t) in model.net.params().names().iter().zip(model.net.params().tensors()) {
        entries.push(ParamEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.len();
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        config: model.config.clone(),
        beta: model.beta,
        grid: model.grid.clone(),
        grid_fingerprint: model.grid.fingerprint(),
        scaler: model.scaler.clone(),
        architecture: *model.net.architecture(),
        dim_names: model.dim_names.clone(),
        initial_values: model.initial_values.clone(),
        noise_factors: model.noise_factors.clone(),
        params: entries,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| Error::Schema(format!("cannot encode checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Schema("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(Error::Schema("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&body[..hlen])
        .map_err(|e| Error::Schema(format!("bad checkpoint header: {e}")))?;
    if header.grid.fingerprint() != header.grid_fingerprint {
        return Err(Error::Schema("checkpoint grid fingerprint mismatch".into()));
    }
    let payload = &body[hlen..];
    if payload.len() % 8 != 0 {
        return Err(Error::Schema("checkpoint payload is not whole f64 values".into()));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = ParamSet::default();
    for e in &header.params {
        let n: usize = e.shape.iter().product();
        let end = e.offset.checked_add(n).filter(|&end| end <= values.len()).ok_or_else(|| {
            Error::Schema(format!("parameter {} lies outside the payload", e.name))
        })?;
        params.push(e.name.clone(), Tensor::new(e.shape.clone(), values[e.offset..end].to_vec())?);
    }
    if params.num_scalars() != values.len() {
        return Err(Error::Schema("checkpoint payload has unindexed values".into()));
    }
    let net = DriftNet::from_params(header.architecture, params)?;
    Ok(TrainedModel {
        config: header.config,
        beta: header.beta,
        grid: header.grid,
        scaler: header.scaler,
        net,
        dim_names: header.dim_names,
        initial_values: header.initial_values,
        noise_factors: header.noise_factors,
    })
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}
