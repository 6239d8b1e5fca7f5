//! Loaders, interchange formats and run configuration.
//!
//! Every writer goes through [`atomic_write`]: a temporary file in the target
//! directory, renamed over the destination only after a successful flush.

mod cifar;
mod config;
mod idx;
mod mask_file;
mod normalize;
mod predlog;
mod saliency_file;
mod subset_file;
mod synthetic;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub use cifar::{load_cifar10, read_cifar10, write_cifar10, CIFAR10_CLASSES, CIFAR10_RECORD};
pub use config::{DatasetSource, EvalSettings, FillMode, LoadedData, MaskPolicy, MetricKind, RunConfig};
pub use idx::{load_idx, read_idx_images, read_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use mask_file::{decode_masks, encode_masks, read_masks, write_masks, MASK_MAGIC};
pub use normalize::Normalization;
pub use predlog::{parse_prediction_log, read_prediction_log, write_prediction_log, PredictionLog, PredictionRecord};
pub use saliency_file::{decode_saliency, encode_saliency, read_saliency, write_saliency, SALIENCY_MAGIC};
pub use subset_file::{parse_subset, read_subset, write_subset};
pub use synthetic::{gen_synthetic, SyntheticSpec};

use crate::error::{Error, Result};

/// Writes `path` via a sibling temporary file and a rename.
pub fn atomic_write<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<&mut File>) -> io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Bounds-checked cursor over an in-memory file.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        ByteReader { bytes, pos: 0, path }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::format(
                self.path,
                format!("truncated: need {n} bytes at offset {}, have {}", self.pos, self.remaining()),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s_le(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::format(self.path, "length overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(self.path, format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Reads until `buf` is full or EOF; returns bytes read. Unlike `read_exact`,
/// a short read at EOF is reported rather than treated as an error.
pub(crate) fn read_full<R: io::Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Test helper: a reader that hands out at most `chunk` bytes per call.
#[cfg(test)]
pub(crate) struct ChunkedReader<'a> {
    pub(crate) data: &'a [u8],
    pub(crate) chunk: usize,
}

#[cfg(test)]
impl io::Read for ChunkedReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.chunk.min(buf.len()).min(self.data.len());
        buf[..n].copy_from_slice(&self.data[..n]);
        self.data = &self.data[n..];
        Ok(n)
    }
}
