use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Image, LabeledDataset};

/// Per-channel `(x - mean) / std`, applied to pixels already scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Normalization { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.mean.is_empty() {
            return Err(Error::InvalidArgument(
                "normalization mean/std must be non-empty and of equal length".into(),
            ));
        }
        if self.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("normalization std must be positive and finite".into()));
        }
        Ok(())
    }

    /// Per-channel mean and population std of a raw dataset.
    pub fn fit(data: &LabeledDataset) -> Self {
        let shape = data.shape();
        let n = (shape.pixels() * data.len()) as f64;
        let mut mean = Vec::with_capacity(shape.channels);
        let mut std = Vec::with_capacity(shape.channels);
        for c in 0..shape.channels {
            let sum: f64 = data.images().iter().flat_map(|i| i.plane(c)).map(|&v| v as f64).sum();
            let m = sum / n;
            let var: f64 = data
                .images()
                .iter()
                .flat_map(|i| i.plane(c))
                .map(|&v| (v as f64 - m).powi(2))
                .sum::<f64>()
                / n;
            mean.push(m as f32);
            std.push((var.sqrt().max(1e-6)) as f32);
        }
        Normalization { mean, std }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let n = img.shape().pixels();
        let data = img
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i / n]) / self.std[i / n])
            .collect();
        Image::new(img.height(), img.width(), img.channels(), data)
    }

    /// Inverse of [`apply`](Self::apply), for rendering.
    pub fn invert(&self, img: &Image) -> Result<Image> {
        self.check(img)?;
        let n = img.shape().pixels();
        let data = img
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * self.std[i / n] + self.mean[i / n])
            .collect();
        Image::new(img.height(), img.width(), img.channels(), data)
    }

    pub fn apply_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let images = data.images().iter().map(|i| self.apply(i)).collect::<Result<Vec<_>>>()?;
        LabeledDataset::with_ids(images, data.labels().to_vec(), data.ids().to_vec(), data.num_classes(), data.split())
    }

    fn check(&self, img: &Image) -> Result<()> {
        if img.channels() != self.channels() {
            return Err(Error::shape("normalization channels", self.channels(), img.channels()));
        }
        Ok(())
    }
}
