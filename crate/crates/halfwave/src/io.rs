//! HWF1 field files and their JSON sidecars.
//!
//! Layout: `b"HWF1"`, version (`u32`), 8 reserved bytes, then little-endian
//! `dim: u32`, `n: u32`, `L: f64` and the `n^dim` samples as `f64` in
//! row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{make_grid, Field};

pub const MAGIC: &[u8; 4] = b"HWF1";
pub const VERSION: u32 = 1;
const HEADER: usize = 16 + 4 + 4 + 8;

/// Metadata mirrored into `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub n: usize,
    pub box_length: f64,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

impl FieldDescriptor {
    pub fn of(u: &Field) -> FieldDescriptor {
        let g = u.grid();
        FieldDescriptor {
            format: "HWF1".into(),
            version: VERSION,
            dim: g.dim(),
            n: g.points_per_dim(),
            box_length: g.box_length(),
            samples: g.len(),
            extra: None,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(u: &Field) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(HEADER + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(g.points_per_dim() as u32).to_le_bytes());
    out.extend_from_slice(&g.box_length().to_le_bytes());
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Field> {
    if bytes.len() < HEADER {
        return Err(Error::Format(format!("file has {} bytes, header needs {HEADER}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("missing HWF1 magic".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dim = word(16) as usize;
    let n = word(20) as usize;
    let l = f64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
    let grid = make_grid(dim, l, n)?;
    let body = &bytes[HEADER..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "expected {} samples, found {} bytes of data",
            grid.len(),
            body.len()
        )));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Field::new(&grid, values)
}

/// Write `path` and its sidecar.
pub fn write_field(path: &Path, u: &Field, extra: Option<serde_json::Value>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(u))?;
    let mut desc = FieldDescriptor::of(u);
    desc.extra = extra;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&desc)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Field> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
