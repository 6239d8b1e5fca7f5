//! `OBSM` saliency files, little-endian:
//!
//! ```text
//! magic  4 bytes "OBSM"
//! count  u32
//! height u32
//! width  u32
//! values f32 x count*height*width, map-major then row-major
//! ```
//!
//! Values must be finite and non-negative. Map `i` belongs to dataset position `i`.

use std::io::Write;
use std::path::Path;

use super::{atomic_write, ByteReader};
use crate::error::{Error, Result};
use crate::types::SaliencyMap;

pub const SALIENCY_MAGIC: &[u8; 4] = b"OBSM";

pub fn encode_saliency(maps: &[SaliencyMap]) -> Result<Vec<u8>> {
    let (h, w) = maps.first().map(|m| (m.height(), m.width())).unwrap_or((0, 0));
    if let Some(m) = maps.iter().find(|m| (m.height(), m.width()) != (h, w)) {
        return Err(Error::shape("saliency map", format!("{h}x{w}"), format!("{}x{}", m.height(), m.width())));
    }
    let mut out = Vec::with_capacity(16 + maps.len() * h * w * 4);
    out.extend_from_slice(SALIENCY_MAGIC);
    for v in [maps.len(), h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for m in maps {
        for v in m.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_saliency(bytes: &[u8], path: &Path) -> Result<Vec<SaliencyMap>> {
    let mut r = ByteReader::new(bytes, path);
    if r.take(4)? != SALIENCY_MAGIC {
        return Err(Error::format(path, "bad magic, expected OBSM"));
    }
    let (count, h, w) = (r.u32_le()? as usize, r.u32_le()? as usize, r.u32_le()? as usize);
    let expected = count
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    if expected != r.remaining() {
        return Err(Error::format(
            path,
            format!("header declares {count} maps of {h}x{w} ({expected} bytes), body has {} bytes", r.remaining()),
        ));
    }
    if count > 0 && h * w == 0 {
        return Err(Error::format(path, "maps have zero area"));
    }
    let body = r.take(expected)?;
    let mut maps = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact((h * w * 4).max(1)).enumerate() {
        let values: Vec<f32> = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::format(path, format!("map {i}, pixel {pos}: value {} is negative or non-finite", values[pos])));
        }
        maps.push(SaliencyMap::new(h, w, values)?);
    }
    Ok(maps)
}

pub fn write_saliency(path: &Path, maps: &[SaliencyMap]) -> Result<()> {
    let bytes = encode_saliency(maps)?;
    atomic_write(path, |f| f.write_all(&bytes))
}

pub fn read_saliency(path: &Path) -> Result<Vec<SaliencyMap>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_saliency(&bytes, path)
}
