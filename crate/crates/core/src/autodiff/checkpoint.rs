//! `TOPOCK01` parameter container: magic, `u32` header length, JSON header
//! naming every parameter and its shape, then each tensor as little-endian
//! `f64` followed by its CRC32.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TOPOCK01";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    params: Vec<ParamEntry>,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn checkpoint_bytes(params: &Parameters, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        params: params
            .iter()
            .map(|(_, n, t)| ParamEntry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * params.num_scalars() + 4 * params.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, t) in params.iter() {
        let start = out.len();
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(buf: &[u8], path: &Path) -> Result<(Parameters, serde_json::Value)> {
    let truncated = |what: &str| Error::Truncated(format!("{what} in {}", path.display()));
    if buf.len() < 8 || !buf.starts_with(b"TOPOCK") {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "TOPOCK01",
        });
    }
    if &buf[..8] != CHECKPOINT_MAGIC {
        let found = std::str::from_utf8(&buf[6..8])
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        return Err(Error::Version {
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = buf
        .get(8..12)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(|| truncated("header length"))?;
    let header: Header =
        serde_json::from_slice(buf.get(12..12 + len).ok_or_else(|| truncated("header"))?)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut pos = 12 + len;
    let mut params = Parameters::new();
    for (i, e) in header.params.iter().enumerate() {
        let n: usize = e.shape.iter().product();
        let raw = buf
            .get(pos..pos + 8 * n)
            .ok_or_else(|| truncated(&e.name))?;
        let stored = buf
            .get(pos + 8 * n..pos + 8 * n + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| truncated(&e.name))?;
        let computed = crc32fast::hash(raw);
        if stored != computed {
            return Err(Error::Checksum {
                record: i,
                stored,
                computed,
            });
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.insert(e.name.clone(), Tensor::new(&e.shape, data)?)?;
        pos += 8 * n + 4;
    }
    if pos != buf.len() {
        return Err(Error::Schema(format!(
            "{} trailing bytes in checkpoint",
            buf.len() - pos
        )));
    }
    Ok((params, header.meta))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &Parameters,
    meta: &serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(params, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Parameters, serde_json::Value)> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&buf, path)
}
