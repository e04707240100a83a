//! Checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "NLTCKPT\0"
//! 8       4     format version, u32 LE
//! 12      8     header length L, u64 LE
//! 20      L     JSON header (CheckpointHeader)
//! 20+L    4*N   parameters, f32 LE, in header order
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InputNorm, ModelConfig, Network};
use crate::nn::Params;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"NLTCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub norm: InputNorm,
    /// Parameter tensor names and lengths, in storage order.
    pub tensors: Vec<(String, usize)>,
    /// Free-form training metadata (epoch, metrics, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, net: &Network<f32>, meta: serde_json::Value) -> Result<()> {
    let header = CheckpointHeader {
        config: net.config.clone(),
        norm: net.norm,
        tensors: net.named_lengths(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    let params = net.flat();
    let mut buf = Vec::with_capacity(20 + json.len() + 4 * params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::CorruptContainer {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_parts(path: &Path) -> Result<(CheckpointHeader, Vec<u8>, usize)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt(path, "not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() < 20 + len {
        return Err(corrupt(path, "truncated header"));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[20..20 + len]).map_err(|e| corrupt(path, format!("header: {e}")))?;
    Ok((header, bytes, 20 + len))
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    Ok(read_parts(path)?.0)
}

/// Load a checkpoint, trusting the architecture stored in it.
pub fn load_checkpoint(path: &Path) -> Result<(Network<f32>, CheckpointHeader)> {
    let (header, bytes, off) = read_parts(path)?;
    let mut net = Network::<f32>::new(header.config.clone(), header.norm, 0)?;
    if net.named_lengths() != header.tensors {
        return Err(Error::CheckpointMismatch(format!(
            "{}: stored tensors do not match the architecture in its own header",
            path.display()
        )));
    }
    let n = net.param_count();
    let payload = &bytes[off..];
    if payload.len() != 4 * n {
        return Err(corrupt(path, format!("expected {} parameter bytes, found {}", 4 * n, payload.len())));
    }
    let values: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    net.set_flat(&values);
    Ok((net, header))
}

/// Load a checkpoint that must have exactly the given architecture.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<Network<f32>> {
    let header = read_checkpoint_header(path)?;
    if &header.config != expected {
        return Err(Error::CheckpointMismatch(format!(
            "{} holds {:?}, requested {:?}",
            path.display(),
            header.config,
            expected
        )));
    }
    Ok(load_checkpoint(path)?.0)
}
