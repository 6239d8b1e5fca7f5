//! `OBMK` mask files, little-endian:
//!
//! ```text
//! magic  4 bytes "OBMK"
//! count  u32
//! height u32
//! width  u32
//! cells  u8 x count*height*width, each 0 or 1, mask-major then row-major
//! ```

use std::io::Write;
use std::path::Path;

use super::{atomic_write, ByteReader};
use crate::error::{Error, Result};
use crate::types::Mask;

pub const MASK_MAGIC: &[u8; 4] = b"OBMK";

pub fn encode_masks(masks: &[Mask]) -> Result<Vec<u8>> {
    let (h, w) = masks.first().map(|m| (m.height(), m.width())).unwrap_or((0, 0));
    if let Some(m) = masks.iter().find(|m| (m.height(), m.width()) != (h, w)) {
        return Err(Error::shape("mask", format!("{h}x{w}"), format!("{}x{}", m.height(), m.width())));
    }
    let mut out = Vec::with_capacity(16 + masks.len() * h * w);
    out.extend_from_slice(MASK_MAGIC);
    for v in [masks.len(), h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for m in masks {
        out.extend(m.covered().iter().map(|&c| c as u8));
    }
    Ok(out)
}

pub fn decode_masks(bytes: &[u8], path: &Path) -> Result<Vec<Mask>> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(4)? != MASK_MAGIC {
        return Err(Error::format(path, "bad magic, expected OBMK"));
    }
    let (count, h, w) = (r.u32_le()? as usize, r.u32_le()? as usize, r.u32_le()? as usize);
    let expected = count
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    if expected != r.remaining() {
        return Err(Error::format(
            path,
            format!("header declares {count} masks of {h}x{w} ({expected} bytes), body has {} bytes", r.remaining()),
        ));
    }
    if count > 0 && h * w == 0 {
        return Err(Error::format(path, "masks have zero area"));
    }
    let body = r.take(expected)?;
    if let Some(pos) = body.iter().position(|&b| b > 1) {
        return Err(Error::format(path, format!("cell byte {} at body offset {pos} is not 0 or 1", body[pos])));
    }
    body.chunks_exact((h * w).max(1))
        .map(|c| Mask::new(h, w, c.iter().map(|&b| b == 1).collect()))
        .collect()
}

pub fn write_masks(path: &Path, masks: &[Mask]) -> Result<()> {
    let bytes = encode_masks(masks)?;
    atomic_write(path, |f| f.write_all(&bytes))
}

pub fn read_masks(path: &Path) -> Result<Vec<Mask>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_masks(&bytes, path)
}
