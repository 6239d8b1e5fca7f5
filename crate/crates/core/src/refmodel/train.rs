//! Minibatch SGD with momentum under the six augmentation regimes.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{soft_cross_entropy, Gradients, TinyCnn};
use crate::error::{Error, Result};
use crate::maskgen::{sample_lambda, FourierMaskParams, MaskBank};
use crate::occlude::{cutmix_box, fmix_mix_with_lambda, mask_mix, mixup_mix};
use crate::seed::{stream, SeedSequence};
use crate::types::{Image, LabeledDataset, Mask};

/// Samples per gradient partial sum. Partial sums are reduced in index order,
/// so the result does not depend on the number of worker threads.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationMode {
    Basic,
    Mixup,
    Cutmix,
    Fmix,
    /// Fourier mixing with one mask fixed for the whole run.
    Rm,
    /// Fourier mixing with one of three fixed masks per batch.
    Rm3,
}

impl AugmentationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationMode::Basic => "basic",
            AugmentationMode::Mixup => "mixup",
            AugmentationMode::Cutmix => "cutmix",
            AugmentationMode::Fmix => "fmix",
            AugmentationMode::Rm => "rm",
            AugmentationMode::Rm3 => "rm3",
        }
    }

    /// Bank size the mode needs, if any.
    pub fn bank_size(self) -> Option<usize> {
        match self {
            AugmentationMode::Rm => Some(1),
            AugmentationMode::Rm3 => Some(3),
            _ => None,
        }
    }
}

impl std::str::FromStr for AugmentationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "basic" => AugmentationMode::Basic,
            "mixup" => AugmentationMode::Mixup,
            "cutmix" => AugmentationMode::Cutmix,
            "fmix" => AugmentationMode::Fmix,
            "rm" => AugmentationMode::Rm,
            "rm3" => AugmentationMode::Rm3,
            other => return Err(Error::InvalidArgument(format!("unknown augmentation mode `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub from_epoch: usize,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Piecewise-constant schedule. When absent: 0.1 for the first half of
    /// the epochs, 0.001 afterwards.
    pub lr_schedule: Option<Vec<LrStep>>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub mode: AugmentationMode,
    pub label_randomization: bool,
    pub seed: u64,
    /// Beta parameter for all mixing coefficients, plus the Fourier decay.
    pub mask_params: FourierMaskParams,
    /// Use this coefficient instead of drawing one per batch.
    pub fixed_lambda: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 128,
            lr_schedule: None,
            momentum: 0.9,
            weight_decay: 0.0,
            mode: AugmentationMode::Basic,
            label_randomization: false,
            seed: 0,
            mask_params: FourierMaskParams::default(),
            fixed_lambda: None,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match &self.lr_schedule {
            Some(steps) => steps
                .iter()
                .filter(|s| s.from_epoch <= epoch)
                .max_by_key(|s| s.from_epoch)
                .or_else(|| steps.iter().min_by_key(|s| s.from_epoch))
                .map(|s| s.lr)
                .unwrap_or(0.0),
            None => {
                if epoch < self.epochs.div_ceil(2) {
                    0.1
                } else {
                    0.001
                }
            }
        }
    }

    /// Every problem with the config, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("epochs must be positive".to_string());
        }
        if self.batch_size == 0 {
            out.push("batch_size must be positive".to_string());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            out.push(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if let Some(steps) = &self.lr_schedule {
            if steps.is_empty() {
                out.push("lr_schedule must not be empty".to_string());
            }
            for s in steps {
                if !(s.lr > 0.0 && s.lr.is_finite()) {
                    out.push(format!("lr must be positive, got {} from epoch {}", s.lr, s.from_epoch));
                }
            }
        }
        if let Err(e) = self.mask_params.validate() {
            out.push(e.to_string());
        }
        if let Some(l) = self.fixed_lambda {
            if !(0.0..=1.0).contains(&l) {
                out.push(format!("fixed_lambda {l} outside [0, 1]"));
            }
        }
        out
    }
}

/// Optional inputs to [`train`].
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainExtras<'a> {
    /// Fixed masks for the `rm`/`rm3` modes.
    pub mask_bank: Option<&'a MaskBank>,
    /// Source of second images; the batch itself is permuted when absent.
    pub donor: Option<&'a LabeledDataset>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Labels the model was fitted to (permuted when label randomisation is on).
    pub labels: Vec<usize>,
}

/// One element of a (possibly mixed) batch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub image: Image,
    pub first_label: usize,
    pub second_label: usize,
    /// Loss weight of `first_label`.
    pub weight: f64,
}

impl TrainingSample {
    fn target(&self, classes: usize) -> Vec<f64> {
        let mut t = vec![0.0; classes];
        t[self.first_label] += self.weight;
        t[self.second_label] += 1.0 - self.weight;
        t
    }
}

/// Builds the augmented batch for positions `batch` of `data`.
pub fn mixed_batch(
    data: &LabeledDataset,
    labels: &[usize],
    batch: &[usize],
    cfg: &TrainConfig,
    extras: &TrainExtras<'_>,
    seed: SeedSequence,
) -> Result<Vec<TrainingSample>> {
    if cfg.mode == AugmentationMode::Basic {
        return Ok(batch
            .iter()
            .map(|&i| TrainingSample {
                image: data.images()[i].clone(),
                first_label: labels[i],
                second_label: labels[i],
                weight: 1.0,
            })
            .collect());
    }

    let partners: Vec<(&Image, usize)> = match extras.donor {
        Some(donor) => {
            let mut rng = seed.child(stream::DONOR).rng();
            (0..batch.len())
                .map(|_| {
                    let j = rng.random_range(0..donor.len());
                    (&donor.images()[j], donor.labels()[j])
                })
                .collect()
        }
        None => {
            let mut perm: Vec<usize> = batch.to_vec();
            perm.shuffle(&mut seed.child(stream::PAIRING).rng());
            perm.iter().map(|&j| (&data.images()[j], labels[j])).collect()
        }
    };

    let lambda = match cfg.fixed_lambda {
        Some(l) => l,
        None => sample_lambda(&cfg.mask_params, seed.derive(stream::LAMBDA))?,
    };
    let shape = data.shape();
    let mask_seed = seed.derive(stream::MASK);
    let batch_mask: Option<Mask> = match cfg.mode {
        AugmentationMode::Cutmix => Some(cutmix_box(shape.height, shape.width, lambda, mask_seed)?),
        AugmentationMode::Rm | AugmentationMode::Rm3 => {
            let bank = extras
                .mask_bank
                .ok_or_else(|| Error::InvalidArgument(format!("mode {} needs a mask bank", cfg.mode.as_str())))?;
            Some(bank.pick(mask_seed)?.clone())
        }
        _ => None,
    };

    batch
        .iter()
        .zip(&partners)
        .map(|(&i, &(x2, y2))| {
            let x1 = &data.images()[i];
            let mixed = match cfg.mode {
                AugmentationMode::Mixup => mixup_mix(x1, x2, lambda)?,
                AugmentationMode::Fmix => fmix_mix_with_lambda(x1, x2, lambda, &cfg.mask_params, mask_seed)?,
                _ => mask_mix(x1, x2, batch_mask.clone().expect("mask-based mode"))?,
            };
            Ok(TrainingSample {
                weight: mixed.lambda_eff,
                image: mixed.image,
                first_label: labels[i],
                second_label: y2,
            })
        })
        .collect()
}

fn batch_gradient(model: &TinyCnn, samples: &[TrainingSample]) -> Result<(Gradients, f64)> {
    let classes = model.num_classes();
    let partials: Vec<(Gradients, f64)> = samples
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc: Option<Gradients> = None;
            let mut loss = 0.0;
            for s in chunk {
                let trace = model.forward_trace(&s.image)?;
                let (l, dlogits) = soft_cross_entropy(&trace.logits, &s.target(classes));
                loss += l;
                let g = model.backward(&trace, &dlogits).grads;
                match acc.as_mut() {
                    Some(a) => a.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            Ok((acc.expect("non-empty chunk"), loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut total, mut loss) = iter.next().ok_or(Error::Empty("batch"))?;
    for (g, l) in iter {
        total.add_assign(&g);
        loss += l;
    }
    let n = samples.len() as f64;
    total.scale(1.0 / n);
    Ok((total, loss / n))
}

/// Fraction of `data` predicted as `labels`, without augmentation.
fn clean_accuracy(model: &TinyCnn, data: &LabeledDataset, labels: &[usize]) -> Result<f64> {
    let hits: Vec<bool> = data
        .images()
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, &y)| Ok(model.predict(img)? == y))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Labels the model is fitted to: the dataset's own, or one fixed
/// permutation of them when label randomisation is on.
pub fn training_labels(data: &LabeledDataset, cfg: &TrainConfig) -> Vec<usize> {
    let mut labels = data.labels().to_vec();
    if cfg.label_randomization {
        labels.shuffle(&mut SeedSequence::new(cfg.seed).child(stream::LABELS).rng());
    }
    labels
}

/// Fits `model` to `data` in place.
pub fn train(model: &mut TinyCnn, data: &LabeledDataset, cfg: &TrainConfig, extras: TrainExtras<'_>) -> Result<TrainReport> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    if data.shape() != model.input_shape() {
        return Err(Error::shape("training data", model.input_shape(), data.shape()));
    }
    if data.num_classes() != model.num_classes() {
        return Err(Error::shape("class count", model.num_classes(), data.num_classes()));
    }
    if let Some(want) = cfg.mode.bank_size() {
        match extras.mask_bank {
            Some(bank) if bank.len() == want => {
                let m = &bank.masks()[0];
                if (m.height(), m.width()) != (data.shape().height, data.shape().width) {
                    return Err(Error::shape(
                        "mask bank",
                        format!("{}x{}", data.shape().height, data.shape().width),
                        format!("{}x{}", m.height(), m.width()),
                    ));
                }
            }
            Some(bank) => return Err(Error::shape("mask bank size", want, bank.len())),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "mode {} needs a bank of {want} masks",
                    cfg.mode.as_str()
                )))
            }
        }
    }
    if let Some(donor) = extras.donor {
        donor.images()[0].check_same_shape(&data.images()[0], "donor dataset")?;
        if donor.num_classes() != data.num_classes() {
            return Err(Error::shape("donor class count", data.num_classes(), donor.num_classes()));
        }
    }

    let run = SeedSequence::new(cfg.seed);
    let labels = training_labels(data, cfg);

    let mut velocity: Vec<Vec<f64>> = model.param_slices().iter().map(|s| vec![0.0; s.len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let epoch_seq = run.child(stream::SHUFFLE).child(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut epoch_seq.rng());

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let samples = mixed_batch(data, &labels, batch, cfg, &extras, epoch_seq.child(b as u64))?;
            let (grads, loss) = batch_gradient(model, &samples)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            loss_sum += loss * samples.len() as f64;
            seen += samples.len();
            for ((p, g), v) in model
                .param_slices_mut()
                .into_iter()
                .zip(grads.slices())
                .zip(velocity.iter_mut())
            {
                for ((pi, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                    let gi = gi + cfg.weight_decay * *pi;
                    *vi = cfg.momentum * *vi + gi;
                    *pi -= lr * *vi;
                }
            }
        }
        history.push(EpochStats {
            epoch,
            lr,
            loss: loss_sum / seen as f64,
            train_accuracy: clean_accuracy(model, data, &labels)?,
        });
    }
    Ok(TrainReport { epochs: history, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refmodel::Architecture;
    use crate::types::Split;

    fn bars(n_per_class: usize, seed: u64) -> LabeledDataset {
        // class 0: bright left half, class 1: bright right half, plus noise
        let mut rng = SeedSequence::new(seed).rng();
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per_class {
            let class = i % 2;
            let data: Vec<f32> = (0..64)
                .map(|p| {
                    let col = p % 8;
                    let on = (col < 4) == (class == 0);
                    (if on { 1.0 } else { -1.0 }) + rng.random_range(-0.3..0.3)
                })
                .collect();
            images.push(Image::new(8, 8, 1, data).unwrap());
            labels.push(class);
        }
        LabeledDataset::new(images, labels, 2, Split::Train).unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture { conv_channels: vec![4], kernel: 3 }
    }

    /// Perceptron on raw pixels; converging proves linear separability.
    fn perceptron_separates(data: &LabeledDataset) -> bool {
        let d = data.shape().len();
        let mut w = vec![0.0f64; d + 1];
        for _ in 0..1000 {
            let mut errors = 0;
            for (img, &y) in data.images().iter().zip(data.labels()) {
                let t = if y == 1 { 1.0 } else { -1.0 };
                let s: f64 = w[d] + img.data().iter().zip(&w).map(|(&x, &wi)| x as f64 * wi).sum::<f64>();
                if s * t <= 0.0 {
                    errors += 1;
                    for (wi, &x) in w.iter_mut().zip(img.data()) {
                        *wi += t * x as f64;
                    }
                    w[d] += t;
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        let data = bars(20, 1);
        assert!(perceptron_separates(&data));
        let mut model = TinyCnn::new(data.shape(), 2, &small_arch(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            lr_schedule: Some(vec![LrStep { from_epoch: 0, lr: 0.05 }]),
            ..Default::default()
        };
        let report = train(&mut model, &data, &cfg, TrainExtras::default()).unwrap();
        assert_eq!(report.epochs.last().unwrap().train_accuracy, 1.0);
    }

    #[test]
    fn mixup_at_lambda_one_equals_basic() {
        let data = bars(12, 2);
        let base = TinyCnn::new(data.shape(), 2, &small_arch(), 4).unwrap();
        let basic_cfg = TrainConfig { epochs: 3, batch_size: 5, ..Default::default() };
        let mut a = base.clone();
        train(&mut a, &data, &basic_cfg, TrainExtras::default()).unwrap();
        for mode in [AugmentationMode::Mixup, AugmentationMode::Cutmix] {
            let cfg = TrainConfig { mode, fixed_lambda: Some(1.0), ..basic_cfg.clone() };
            let mut b = base.clone();
            train(&mut b, &data, &cfg, TrainExtras::default()).unwrap();
            assert_eq!(a, b, "{mode:?} at lambda 1 diverged from basic");
        }
    }

    #[test]
    fn training_is_reproducible() {
        let data = bars(10, 3);
        let cfg = TrainConfig { epochs: 2, batch_size: 4, mode: AugmentationMode::Fmix, ..Default::default() };
        let run = || {
            let mut m = TinyCnn::new(data.shape(), 2, &small_arch(), 5).unwrap();
            let r = train(&mut m, &data, &cfg, TrainExtras::default()).unwrap();
            (m, r)
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn thread_count_does_not_change_weights() {
        let data = bars(10, 4);
        let cfg = TrainConfig { epochs: 2, batch_size: 20, mode: AugmentationMode::Mixup, ..Default::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut m = TinyCnn::new(data.shape(), 2, &small_arch(), 6).unwrap();
                train(&mut m, &data, &cfg, TrainExtras::default()).unwrap();
                m
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn rm_modes_require_matching_bank() {
        let data = bars(4, 5);
        let mut m = TinyCnn::new(data.shape(), 2, &small_arch(), 0).unwrap();
        let cfg = TrainConfig { epochs: 1, mode: AugmentationMode::Rm3, ..Default::default() };
        assert!(train(&mut m, &data, &cfg, TrainExtras::default()).is_err());
        let one = MaskBank::sample(1, 8, 8, &FourierMaskParams::default(), 0).unwrap();
        let extras = TrainExtras { mask_bank: Some(&one), donor: None };
        assert!(train(&mut m, &data, &cfg, extras).is_err());
        let three = MaskBank::sample(3, 8, 8, &FourierMaskParams::default(), 0).unwrap();
        let extras = TrainExtras { mask_bank: Some(&three), donor: None };
        assert!(train(&mut m, &data, &cfg, extras).is_ok());
    }

    #[test]
    fn divergence_is_reported() {
        let data = bars(4, 6);
        let mut m = TinyCnn::new(data.shape(), 2, &small_arch(), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 8,
            momentum: 0.0,
            lr_schedule: Some(vec![LrStep { from_epoch: 0, lr: 1e200 }]),
            ..Default::default()
        };
        let err = train(&mut m, &data, &cfg, TrainExtras::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn label_randomization_is_a_fixed_permutation() {
        let data = bars(10, 7);
        let mut m = TinyCnn::new(data.shape(), 2, &small_arch(), 0).unwrap();
        let cfg = TrainConfig { epochs: 1, label_randomization: true, ..Default::default() };
        let r = train(&mut m, &data, &cfg, TrainExtras::default()).unwrap();
        let mut sorted = r.labels.clone();
        sorted.sort_unstable();
        let mut orig = data.labels().to_vec();
        orig.sort_unstable();
        assert_eq!(sorted, orig);
        assert_ne!(r.labels, data.labels());
    }

    #[test]
    fn config_problems_are_exhaustive() {
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 0,
            momentum: 1.0,
            lr_schedule: Some(vec![LrStep { from_epoch: 0, lr: -1.0 }]),
            ..Default::default()
        };
        assert_eq!(cfg.problems().len(), 4);
    }

    #[test]
    fn default_schedule_halves() {
        let cfg = TrainConfig { epochs: 10, ..Default::default() };
        assert_eq!(cfg.lr_at(0), 0.1);
        assert_eq!(cfg.lr_at(4), 0.1);
        assert_eq!(cfg.lr_at(5), 0.001);
        let stepped = TrainConfig {
            lr_schedule: Some(vec![LrStep { from_epoch: 0, lr: 0.5 }, LrStep { from_epoch: 3, lr: 0.05 }]),
            ..Default::default()
        };
        assert_eq!(stepped.lr_at(2), 0.5);
        assert_eq!(stepped.lr_at(3), 0.05);
    }

    #[test]
    fn mixed_batch_weights_match_mask() {
        let data = bars(8, 8);
        let labels = data.labels().to_vec();
        let batch: Vec<usize> = (0..16).collect();
        let cfg = TrainConfig { mode: AugmentationMode::Cutmix, ..Default::default() };
        let samples = mixed_batch(&data, &labels, &batch, &cfg, &TrainExtras::default(), SeedSequence::new(3)).unwrap();
        for s in &samples {
            assert!((0.0..=1.0).contains(&s.weight));
            let t = s.target(2);
            approx::assert_abs_diff_eq!(t.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
}
