//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes (row-major 32x32 planes).

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{atomic_write, read_full, Normalization};
use crate::error::{Error, Result};
use crate::types::{Image, LabeledDataset, Shape, Split};

pub const CIFAR10_RECORD: usize = 3073;
pub const CIFAR10_CLASSES: usize = 10;
const SIDE: usize = 32;

/// Parses records from `reader` until EOF. `path` is only used in errors.
pub fn read_cifar10<R: Read>(mut reader: R, path: &Path, norm: &Normalization) -> Result<(Vec<Image>, Vec<usize>)> {
    norm.validate()?;
    if norm.channels() != 3 {
        return Err(Error::shape("CIFAR-10 normalization channels", 3, norm.channels()));
    }
    let shape = Shape::new(SIDE, SIDE, 3);
    let mut record = [0u8; CIFAR10_RECORD];
    let mut images = Vec::new();
    let mut labels = Vec::new();
    loop {
        let got = read_full(&mut reader, &mut record).map_err(|e| Error::io(path, e))?;
        if got == 0 {
            break;
        }
        if got < CIFAR10_RECORD {
            return Err(Error::format(
                path,
                format!(
                    "truncated: file size is not a multiple of {CIFAR10_RECORD} ({} whole records, {got} stray bytes)",
                    images.len()
                ),
            ));
        }
        let label = record[0] as usize;
        if label >= CIFAR10_CLASSES {
            return Err(Error::format(path, format!("record {}: label byte {label} >= 10", images.len())));
        }
        let plane = SIDE * SIDE;
        let data = record[1..]
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let c = i / plane;
                (b as f32 / 255.0 - norm.mean[c]) / norm.std[c]
            })
            .collect();
        images.push(Image::from_parts(shape, data));
        labels.push(label);
    }
    Ok((images, labels))
}

/// Concatenates the records of several batch files into one dataset.
pub fn load_cifar10(paths: &[PathBuf], split: Split, norm: &Normalization) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let f = File::open(p).map_err(|e| Error::io(p, e))?;
        let (i, l) = read_cifar10(BufReader::new(f), p, norm)?;
        images.extend(i);
        labels.extend(l);
    }
    if images.is_empty() {
        return Err(Error::Empty("CIFAR-10 files contain no records"));
    }
    LabeledDataset::new(images, labels, CIFAR10_CLASSES, split)
}

/// Writes images (de-normalised with `norm`, quantised to bytes) as one CIFAR-10 batch.
pub fn write_cifar10(path: &Path, data: &LabeledDataset, norm: &Normalization) -> Result<()> {
    if data.shape() != Shape::new(SIDE, SIDE, 3) {
        return Err(Error::shape("CIFAR-10 image", Shape::new(SIDE, SIDE, 3), data.shape()));
    }
    if let Some(&l) = data.labels().iter().find(|&&l| l > 255) {
        return Err(Error::InvalidArgument(format!("label {l} does not fit a byte")));
    }
    let mut bytes = Vec::with_capacity(data.len() * CIFAR10_RECORD);
    for (img, &label) in data.images().iter().zip(data.labels()) {
        bytes.push(label as u8);
        let raw = norm.invert(img)?;
        bytes.extend(raw.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    atomic_write(path, |w: &mut io::BufWriter<&mut File>| w.write_all(&bytes))
}
