//! Parameter checkpoints: a little-endian binary tensor file plus a JSON
//! sidecar with the policy configuration and workspace normalization.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use foar_core::demo::Normalizer;
use foar_core::geom::Vec3;
use foar_core::numeric::{ParamStore, Tensor};
use foar_core::policy::{Policy, PolicyConfig};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"FOAR";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Serializes every tensor with `f32` elements. Values that are not exactly
/// representable as `f32` are rounded.
pub fn encode_params(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in params.iter() {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_params(buf: &[u8], path: &Path) -> Result<ParamStore, CheckpointError> {
    let truncated = || format_err(path, "truncated checkpoint");
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4) != Some(&MAGIC[..]) {
        return Err(format_err(path, "bad magic"));
    }
    let version = c.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let mut store = ParamStore::new();
    while c.pos < buf.len() {
        let len = c.u16().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(c.take(len).ok_or_else(truncated)?)
            .map_err(|_| format_err(path, "parameter name is not UTF-8"))?
            .to_string();
        let rank = c.u8().ok_or_else(truncated)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32().ok_or_else(truncated)? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| format_err(path, format!("{name}: {e}")))?;
        store
            .insert(&name, t)
            .map_err(|e| format_err(path, format!("{name}: {e}")))?;
    }
    Ok(store)
}

pub fn write_params(path: &Path, params: &ParamStore) -> Result<(), CheckpointError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_params(params)).map_err(io_err(path))
}

pub fn read_params(path: &Path) -> Result<ParamStore, CheckpointError> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(io_err(path))?;
    decode_params(&buf, path)
}

/// Everything besides the tensors needed to rebuild a [`Policy`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub policy: PolicyConfig,
    pub workspace_lo: [f64; 3],
    pub workspace_hi: [f64; 3],
    pub width_range: [f64; 2],
    /// Optimizer steps behind these parameters.
    pub step: usize,
}

impl PolicyMeta {
    pub fn of(policy: &Policy, step: usize) -> Self {
        let n = &policy.norm;
        Self {
            policy: policy.cfg.clone(),
            workspace_lo: [n.lo.x, n.lo.y, n.lo.z],
            workspace_hi: [n.hi.x, n.hi.y, n.hi.z],
            width_range: n.width_range,
            step,
        }
    }

    pub fn normalizer(&self) -> Normalizer {
        let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
        Normalizer::new(v(self.workspace_lo), v(self.workspace_hi), self.width_range)
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (tensors) and its `.json` sidecar.
pub fn save_policy(path: &Path, policy: &Policy, step: usize) -> Result<(), CheckpointError> {
    write_params(path, &policy.params)?;
    let meta = PolicyMeta::of(policy, step);
    let text = serde_json::to_string_pretty(&meta).expect("policy metadata serializes");
    let mp = meta_path(path);
    fs::write(&mp, text + "\n").map_err(io_err(&mp))
}

pub fn load_policy(path: &Path) -> Result<(Policy, PolicyMeta), CheckpointError> {
    let params = read_params(path)?;
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let meta: PolicyMeta = serde_json::from_str(&text).map_err(|e| format_err(&mp, e.to_string()))?;
    meta.policy
        .validate()
        .map_err(|e| format_err(&mp, e.to_string()))?;
    let policy = Policy::from_parts(meta.policy.clone(), params, meta.normalizer())
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok((policy, meta))
}
