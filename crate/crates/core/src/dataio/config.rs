//! JSON run configuration shared by the `train` and `eval` commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{gen_synthetic, load_cifar10, load_idx, Normalization, SyntheticSpec};
use crate::error::{Error, Result};
use crate::refmodel::{Architecture, GradCamConfig, TrainConfig};
use crate::types::{LabeledDataset, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        /// Seed of the test split; defaults to the train seed plus one.
        #[serde(default)]
        test_seed: Option<u64>,
        #[serde(default)]
        test_per_class: Option<usize>,
    },
    Cifar10 {
        train: Vec<PathBuf>,
        test: Vec<PathBuf>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "ten")]
        num_classes: usize,
    },
}

fn ten() -> usize {
    10
}

impl DatasetSource {
    fn paths(&self) -> Vec<&Path> {
        match self {
            DatasetSource::Synthetic { .. } => Vec::new(),
            DatasetSource::Cifar10 { train, test } => train.iter().chain(test).map(|p| p.as_path()).collect(),
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels, .. } => {
                vec![train_images, train_labels, test_images, test_labels]
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetSource::Synthetic { .. } => {}
            DatasetSource::Cifar10 { train, test } => train.iter_mut().chain(test.iter_mut()).for_each(fix),
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels, .. } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
        }
    }

    /// Raw (unnormalised, `[0, 1]`) pixels for one split.
    pub fn load_raw(&self, split: Split) -> Result<LabeledDataset> {
        match self {
            DatasetSource::Synthetic { spec, test_seed, test_per_class } => match split {
                Split::Train => gen_synthetic(spec, split),
                Split::Test => {
                    let test = SyntheticSpec {
                        seed: test_seed.unwrap_or(spec.seed.wrapping_add(1)),
                        per_class: test_per_class.unwrap_or(spec.per_class),
                        ..spec.clone()
                    };
                    gen_synthetic(&test, split)
                }
            },
            DatasetSource::Cifar10 { train, test } => {
                let paths = if split == Split::Train { train } else { test };
                load_cifar10(paths, split, &Normalization::identity(3))
            }
            DatasetSource::Idx { train_images, train_labels, test_images, test_labels, num_classes } => {
                let (i, l) = match split {
                    Split::Train => (train_images, train_labels),
                    Split::Test => (test_images, test_labels),
                };
                load_idx(i, l, *num_classes, split, &Normalization::identity(1))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FillMode {
    Uniform,
    Donor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPolicy {
    Saliency,
    Rect,
    Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Cutocclusion,
    Iocclusion,
    MisclassDelta,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Cutocclusion => "cutocclusion",
            MetricKind::Iocclusion => "iocclusion",
            MetricKind::MisclassDelta => "misclass-delta",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub metric: MetricKind,
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub fill: FillMode,
    /// Per-channel fill in normalised units; zeros (the dataset mean) when absent.
    pub fill_value: Option<Vec<f32>>,
    pub mask_policy: MaskPolicy,
    pub grad_cam: GradCamConfig,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            metric: MetricKind::Iocclusion,
            fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            seeds: (0..5).collect(),
            fill: FillMode::Uniform,
            fill_value: None,
            mask_policy: MaskPolicy::Saliency,
            grad_cam: GradCamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    /// Second-image source for cross-dataset mixing and textured occluders.
    #[serde(default)]
    pub donor: Option<DatasetSource>,
    /// Fitted on the raw train split when absent.
    #[serde(default)]
    pub normalization: Option<Normalization>,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    /// `OBMK` file with the fixed masks for `rm` / `rm3`.
    #[serde(default)]
    pub mask_bank: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalSettings,
}

fn default_name() -> String {
    "model".to_string()
}

/// Normalised train/test splits plus the constants used.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub normalization: Normalization,
}

impl RunConfig {
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: base.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.dataset.resolve(base);
        if let Some(d) = cfg.donor.as_mut() {
            d.resolve(base);
        }
        if let Some(p) = cfg.mask_bank.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Reads a config; relative paths inside it are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&text, base).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse { path: path.to_path_buf(), line, message },
            other => other,
        })
    }

    /// Every problem with the config.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self.train.problems().into_iter().map(|p| format!("train: {p}")).collect();
        if let Some(want) = self.train.mode.bank_size() {
            if self.mask_bank.is_none() {
                out.push(format!(
                    "train: mode {} needs `mask_bank` pointing at an OBMK file with {want} mask(s)",
                    self.train.mode.as_str()
                ));
            }
        }
        if let Some(p) = &self.mask_bank {
            if !p.exists() {
                out.push(format!("mask_bank: {} does not exist", p.display()));
            }
        }
        for p in self.dataset.paths() {
            if !p.exists() {
                out.push(format!("dataset: {} does not exist", p.display()));
            }
        }
        if let Some(d) = &self.donor {
            for p in d.paths() {
                if !p.exists() {
                    out.push(format!("donor: {} does not exist", p.display()));
                }
            }
        }
        if let Some(n) = &self.normalization {
            if let Err(e) = n.validate() {
                out.push(format!("normalization: {e}"));
            }
        }
        if self.architecture.kernel % 2 == 0 {
            out.push(format!("architecture: kernel must be odd, got {}", self.architecture.kernel));
        }
        if self.architecture.conv_channels.is_empty() {
            out.push("architecture: need at least one conv stage".into());
        }
        let ev = &self.eval;
        if ev.fractions.is_empty() {
            out.push("eval: fractions must not be empty".into());
        }
        if let Some(f) = ev.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            out.push(format!("eval: fraction {f} outside [0, 1]"));
        }
        if ev.seeds.is_empty() {
            out.push("eval: seeds must not be empty".into());
        }
        if ev.fill == FillMode::Donor && self.donor.is_none() {
            out.push("eval: fill `donor` needs a `donor` dataset".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("\n")))
        }
    }

    /// Loads and normalises both splits.
    pub fn load_data(&self) -> Result<LoadedData> {
        let raw_train = self.dataset.load_raw(Split::Train)?;
        let raw_test = self.dataset.load_raw(Split::Test)?;
        let normalization = match &self.normalization {
            Some(n) => n.clone(),
            None => Normalization::fit(&raw_train),
        };
        Ok(LoadedData {
            train: normalization.apply_dataset(&raw_train)?,
            test: normalization.apply_dataset(&raw_test)?,
            normalization,
        })
    }

    /// Donor split, normalised with the main dataset's constants.
    pub fn load_donor(&self, split: Split, normalization: &Normalization) -> Result<Option<LabeledDataset>> {
        self.donor
            .as_ref()
            .map(|d| normalization.apply_dataset(&d.load_raw(split)?))
            .transpose()
    }
}
