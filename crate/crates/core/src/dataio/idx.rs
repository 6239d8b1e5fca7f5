//! IDX files (MNIST / Fashion-MNIST): big-endian headers, unsigned bytes.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use super::{read_full, Normalization};
use crate::error::{Error, Result};
use crate::types::{Image, LabeledDataset, Shape, Split};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be<R: Read>(r: &mut R, path: &Path, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    if read_full(r, &mut b).map_err(|e| Error::io(path, e))? != 4 {
        return Err(Error::format(path, format!("truncated header: missing {what}")));
    }
    Ok(u32::from_be_bytes(b))
}

fn read_payload<R: Read>(r: &mut R, len: usize, path: &Path) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    let got = read_full(r, &mut buf).map_err(|e| Error::io(path, e))?;
    if got != len {
        return Err(Error::format(path, format!("truncated payload: expected {len} bytes, got {got}")));
    }
    let mut probe = [0u8; 1];
    if read_full(r, &mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after payload"));
    }
    Ok(buf)
}

/// Grayscale images from an `idx3-ubyte` stream.
pub fn read_idx_images<R: Read>(mut r: R, path: &Path, norm: &Normalization) -> Result<Vec<Image>> {
    norm.validate()?;
    if norm.channels() != 1 {
        return Err(Error::shape("IDX normalization channels", 1, norm.channels()));
    }
    let magic = read_u32_be(&mut r, path, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(path, format!("bad image magic {magic:#010x}, expected 0x00000803")));
    }
    let count = read_u32_be(&mut r, path, "count")? as usize;
    let rows = read_u32_be(&mut r, path, "rows")? as usize;
    let cols = read_u32_be(&mut r, path, "cols")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    let len = count
        .checked_mul(rows * cols)
        .ok_or_else(|| Error::format(path, "declared size overflows"))?;
    let payload = read_payload(&mut r, len, path)?;
    let shape = Shape::new(rows, cols, 1);
    Ok(payload
        .chunks_exact(rows * cols)
        .map(|px| Image::from_parts(shape, px.iter().map(|&b| (b as f32 / 255.0 - norm.mean[0]) / norm.std[0]).collect()))
        .collect())
}

/// Labels from an `idx1-ubyte` stream.
pub fn read_idx_labels<R: Read>(mut r: R, path: &Path) -> Result<Vec<usize>> {
    let magic = read_u32_be(&mut r, path, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(path, format!("bad label magic {magic:#010x}, expected 0x00000801")));
    }
    let count = read_u32_be(&mut r, path, "count")? as usize;
    Ok(read_payload(&mut r, count, path)?.into_iter().map(usize::from).collect())
}

pub fn load_idx(
    images_path: &Path,
    labels_path: &Path,
    num_classes: usize,
    split: Split,
    norm: &Normalization,
) -> Result<LabeledDataset> {
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Error::io(p, e));
    let images = read_idx_images(open(images_path)?, images_path, norm)?;
    let labels = read_idx_labels(open(labels_path)?, labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::format(
            labels_path,
            format!("count mismatch: {} images vs {} labels", images.len(), labels.len()),
        ));
    }
    LabeledDataset::new(images, labels, num_classes, split)
}
