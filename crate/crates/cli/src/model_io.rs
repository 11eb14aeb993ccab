//! Versioned little-endian model file.
//!
//! ```text
//! magic     8 bytes  "TQRATIO\0"
//! version   u32      1
//! width     u32      hidden width H
//! shift     2 × f64  input normalization
//! scale     2 × f64
//! config    32 bytes SHA-256 fingerprint of the producing configuration
//! count     u64      parameter count, H² + 5H + 1
//! params    count × f64
//! ```

use std::fs;
use std::path::Path;

use tandem_core::ratio::{Normalization, RatioModel};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 8] = *b"TQRATIO\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: RatioModel,
    pub fingerprint: [u8; 32],
}

pub fn encode(model: &RatioModel, fingerprint: &[u8; 32]) -> Vec<u8> {
    let params = model.params();
    let mut out = Vec::with_capacity(8 + 4 + 4 + 32 + 32 + 8 + 8 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let width = u32::try_from(model.width()).expect("width fits in u32");
    out.extend_from_slice(&width.to_le_bytes());
    let norm = model.normalization();
    for v in norm.shift.iter().chain(&norm.scale) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(fingerprint);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.bytes.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}

pub fn decode(bytes: &[u8], origin: &Path) -> Result<ModelFile> {
    let bad = |message: &str| CliError::ModelFormat {
        path: origin.to_path_buf(),
        message: message.to_string(),
    };
    let mut r = Reader { bytes, at: 0 };
    if r.take(8) != Some(&MAGIC[..]) {
        return Err(bad("not a model file"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let width = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut norm = [0.0; 4];
    for v in &mut norm {
        *v = r.f64().ok_or_else(|| bad("truncated header"))?;
    }
    let mut fingerprint = [0u8; 32];
    fingerprint.copy_from_slice(r.take(32).ok_or_else(|| bad("truncated header"))?);
    let count = r.u64().ok_or_else(|| bad("truncated header"))?;
    let remaining = (bytes.len() - r.at) as u64;
    if remaining != count.saturating_mul(8) {
        return Err(bad("parameter block length does not match its count"));
    }
    let params: Vec<f64> = (0..count).map(|_| r.f64().expect("length checked")).collect();
    let normalization = Normalization {
        shift: [norm[0], norm[1]],
        scale: [norm[2], norm[3]],
    };
    let model = RatioModel::from_parts(width, params, normalization).map_err(|e| bad(&e.to_string()))?;
    Ok(ModelFile { model, fingerprint })
}

pub fn write(path: &Path, model: &RatioModel, fingerprint: &[u8; 32]) -> Result<()> {
    fs::write(path, encode(model, fingerprint)).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<ModelFile> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}
