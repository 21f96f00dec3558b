//! Binary checkpoint format for [`ModelParams`].
//!
//! Little-endian throughout:
//!
//! ```text
//! magic    4 bytes  "FWSM"
//! version  u32      1
//! layers   u32      L
//! shapes   L x (fan_in u32, fan_out u32)
//! values   f64 ...  per layer in order: weights (row-major [fan_out x fan_in]), then biases
//! ```

use std::fs;
use std::path::Path;

use super::model::{LayerShape, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FWSM";
pub const VERSION: u32 = 1;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * params.num_layers() + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for s in params.shapes() {
        out.extend_from_slice(&(s.fan_in as u32).to_le_bytes());
        out.extend_from_slice(&(s.fan_out as u32).to_le_bytes());
    }
    for v in params.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse_at_byte(self.path, self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint. `path` is only used in error messages.
pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let mut r = Reader { path, bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::parse_at_byte(path, 0, "bad magic, expected \"FWSM\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::parse_at_byte(path, 4, format!("unsupported version {version}")));
    }
    let layers = r.u32("layer count")? as usize;
    let mut shapes = Vec::with_capacity(layers.min(1024));
    for _ in 0..layers {
        let fan_in = r.u32("fan_in")? as usize;
        let fan_out = r.u32("fan_out")? as usize;
        shapes.push(LayerShape { fan_in, fan_out });
    }
    let n: usize = shapes.iter().map(|s| s.fan_in * s.fan_out + s.fan_out).sum();
    let header_end = r.pos;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push(f64::from_le_bytes(r.take(8, "parameter values")?.try_into().expect("8 bytes")));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse_at_byte(path, r.pos, "trailing bytes after parameter values"));
    }
    ModelParams::from_flat(shapes, values).map_err(|e| Error::parse_at_byte(path, header_end, e.to_string()))
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path)
}
