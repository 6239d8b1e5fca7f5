//! Shared domain types. All of them are immutable once built.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape { height, width, channels }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A normalised image, channel-planar: `data[c*h*w + r*w + col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(height, width, channels);
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image has zero area".into()));
        }
        if data.len() != shape.len() {
            return Err(Error::shape("image data length", shape.len(), data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite pixel value at offset {pos}"
            )));
        }
        Ok(Image { shape, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Construction for data already known to satisfy the invariants.
    pub(crate) fn from_parts(shape: Shape, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        Image { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[channel * self.shape.pixels() + row * self.shape.width + col]
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.shape.pixels();
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn check_same_shape(&self, other: &Image, what: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(what, self.shape, other.shape));
        }
        Ok(())
    }
}

/// Per-pixel cover map; `true` means occluded.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    covered: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, covered: Vec<bool>) -> Result<Self> {
        if covered.len() != height * width {
            return Err(Error::shape("mask length", height * width, covered.len()));
        }
        Ok(Mask { height, width, covered })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask { height, width, covered: vec![false; height * width] }
    }

    pub fn full(height: usize, width: usize) -> Self {
        Mask { height, width, covered: vec![true; height * width] }
    }

    /// Axis-aligned rectangle `[top, top+rh) x [left, left+rw)`, clipped to the grid.
    pub fn rectangle(height: usize, width: usize, top: usize, left: usize, rh: usize, rw: usize) -> Self {
        let mut m = Mask::empty(height, width);
        for r in top..(top + rh).min(height) {
            for c in left..(left + rw).min(width) {
                m.covered[r * width + c] = true;
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn is_covered(&self, row: usize, col: usize) -> bool {
        self.covered[row * self.width + col]
    }

    pub fn covered_count(&self) -> usize {
        self.covered.iter().filter(|&&c| c).count()
    }

    /// Achieved fraction: covered pixels over all pixels.
    pub fn covered_fraction(&self) -> f64 {
        if self.covered.is_empty() {
            return 0.0;
        }
        self.covered_count() as f64 / self.pixels() as f64
    }

    pub fn check_image(&self, img: &Image) -> Result<()> {
        if self.height != img.height() || self.width != img.width() {
            return Err(Error::shape(
                "mask vs image",
                format!("{}x{}", img.height(), img.width()),
                format!("{}x{}", self.height, self.width),
            ));
        }
        Ok(())
    }
}

/// Non-negative per-pixel importance, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape("saliency length", height * width, values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "saliency value at offset {pos} is negative or non-finite: {}",
                values[pos]
            )));
        }
        Ok(SaliencyMap { height, width, values })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Sorted, duplicate-free selection of dataset positions within one split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsetIndex {
    split: Split,
    indices: Vec<usize>,
}

impl SubsetIndex {
    /// Sorts `indices`; duplicates are rejected.
    pub fn new(split: Split, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate subset index {}", w[0])));
        }
        Ok(SubsetIndex { split, indices })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn check_range(&self, len: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= len => Err(Error::InvalidArgument(format!(
                "subset index {last} out of range for {len} items"
            ))),
            _ => Ok(()),
        }
    }
}

/// Images of one shape with class labels.
///
/// `ids` carries each image's position in the dataset it was loaded from, so
/// a filtered dataset keeps drawing the same per-item seeds as the original.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    shape: Shape,
    images: Vec<Image>,
    labels: Vec<usize>,
    ids: Vec<usize>,
    num_classes: usize,
    split: Split,
}

impl LabeledDataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        let ids = (0..images.len()).collect();
        Self::with_ids(images, labels, ids, num_classes, split)
    }

    pub fn with_ids(
        images: Vec<Image>,
        labels: Vec<usize>,
        ids: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if images.len() != labels.len() {
            return Err(Error::shape("label count", images.len(), labels.len()));
        }
        if ids.len() != images.len() {
            return Err(Error::shape("id count", images.len(), ids.len()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        let shape = images[0].shape();
        for img in &images {
            if img.shape() != shape {
                return Err(Error::shape("dataset image", shape, img.shape()));
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} at position {i} not below num_classes {num_classes}"
            )));
        }
        Ok(LabeledDataset { shape, images, labels, ids, num_classes, split })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Same images with labels replaced.
    pub fn relabel(&self, labels: Vec<usize>) -> Result<Self> {
        Self::with_ids(self.images.clone(), labels, self.ids.clone(), self.num_classes, self.split)
    }

    /// Keeps images whose id is in `subset`. Ids are preserved.
    pub fn subset(&self, subset: &SubsetIndex) -> Result<Self> {
        if subset.split() != self.split {
            return Err(Error::InvalidArgument(format!(
                "subset is for split {}, dataset is {}",
                subset.split(),
                self.split
            )));
        }
        let max_id = self.ids.iter().copied().max().unwrap_or(0);
        subset.check_range(max_id + 1)?;
        let keep: Vec<usize> = (0..self.len()).filter(|&i| subset.contains(self.ids[i])).collect();
        if keep.is_empty() {
            return Err(Error::Empty("subset selects no images"));
        }
        Self::with_ids(
            keep.iter().map(|&i| self.images[i].clone()).collect(),
            keep.iter().map(|&i| self.labels[i]).collect(),
            keep.iter().map(|&i| self.ids[i]).collect(),
            self.num_classes,
            self.split,
        )
    }

    /// First `n` images (or all, if fewer).
    pub fn take(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::with_ids(
            self.images[..n].to_vec(),
            self.labels[..n].to_vec(),
            self.ids[..n].to_vec(),
            self.num_classes,
            self.split,
        )
    }
}
