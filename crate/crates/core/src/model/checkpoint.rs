//! Binary model checkpoints.
//!
//! Layout (little-endian): `ECCM`, u16 version, u32 config length, config
//! as JSON, u32 tensor count, then for each tensor a u64 element count
//! followed by its values as f32.

use std::fs;
use std::path::Path;

use super::params::{ModelConfig, ModelParams};
use super::ModelError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ECCM";
pub const CHECKPOINT_VERSION: u16 = 1;

fn err(path: &Path, reason: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn encode_checkpoint(config: &ModelConfig, params: &ModelParams) -> Vec<u8> {
    let cfg = serde_json::to_vec(config).expect("model config serializes");
    let tensors = params.tensors();
    let mut out = Vec::with_capacity(16 + cfg.len() + 4 * params.num_scalars());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (_, t) in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for &x in t {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    fs::write(path, encode_checkpoint(config, params)).map_err(|e| err(path, e.to_string()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }
    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(
    path: &Path,
    buf: &[u8],
) -> Result<(ModelConfig, ModelParams), ModelError> {
    let truncated = || err(path, "truncated");
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).ok_or_else(truncated)? != CHECKPOINT_MAGIC {
        return Err(err(path, "bad magic"));
    }
    let version = r.u16().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(err(path, format!("unsupported version {version}")));
    }
    let cfg_len = r.u32().ok_or_else(truncated)? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(cfg_len).ok_or_else(truncated)?)
        .map_err(|e| err(path, format!("config: {e}")))?;
    config.validate()?;
    let mut params = ModelParams::zeros(&config);
    let count = r.u32().ok_or_else(truncated)? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(err(
            path,
            format!("{count} tensors, config implies {}", slots.len()),
        ));
    }
    for slot in slots.iter_mut() {
        let n = r.u64().ok_or_else(truncated)? as usize;
        if n != slot.len() {
            return Err(err(
                path,
                format!("tensor of {n} values, expected {}", slot.len()),
            ));
        }
        let bytes = r
            .take(n.checked_mul(4).ok_or_else(truncated)?)
            .ok_or_else(truncated)?;
        for (dst, b) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
    }
    if r.pos != buf.len() {
        return Err(err(path, "trailing bytes"));
    }
    Ok((config, params))
}

pub fn read_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams), ModelError> {
    let buf = fs::read(path).map_err(|e| err(path, e.to_string()))?;
    decode_checkpoint(path, &buf)
}
