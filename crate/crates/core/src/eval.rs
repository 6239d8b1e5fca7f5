//! Evaluation pipelines: clean and occluded predictions, CutOcclusion,
//! iOcclusion curves and misclassification deltas.
//!
//! Every per-image random choice is seeded from `(seed, split, image id,
//! fraction)`, and the per-image map is collected in order, so results do not
//! depend on the size of the thread pool.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::dataio::{MaskPolicy, MetricKind, PredictionLog, PredictionRecord};
use crate::error::{Error, Result};
use crate::maskgen::{fourier_mask, rect_mask, saliency_mask, FourierMaskParams};
use crate::metrics::{
    accuracy, aggregate_seeds, i_occlusion, misclass_delta, MisclassDelta, OrderedFraction, RobustnessCurve,
    SeedSummary, SplitAccuracy,
};
use crate::occlude::{apply_donor, apply_uniform};
use crate::refmodel::{grad_cam, GradCamConfig, TinyCnn};
use crate::seed::{stream, SeedSequence};
use crate::types::{Image, LabeledDataset, Mask, SaliencyMap, Split};

/// Anything that maps an image to a class index.
pub trait Classifier: Sync {
    fn predict(&self, img: &Image) -> Result<usize>;
}

impl Classifier for TinyCnn {
    fn predict(&self, img: &Image) -> Result<usize> {
        TinyCnn::predict(self, img)
    }
}

/// Produces a saliency map for an image with known label.
pub trait SaliencySource: Sync {
    fn saliency(&self, img: &Image, label: usize) -> Result<SaliencyMap>;
}

pub struct GradCam<'a> {
    pub model: &'a TinyCnn,
    pub config: GradCamConfig,
}

impl SaliencySource for GradCam<'_> {
    fn saliency(&self, img: &Image, label: usize) -> Result<SaliencyMap> {
        grad_cam(self.model, img, &self.config, Some(label))
    }
}

/// What goes under the mask.
#[derive(Clone, Copy, Debug)]
pub enum Fill<'a> {
    /// Per-channel constant.
    Uniform(&'a [f32]),
    /// Pixels of a randomly chosen image from another dataset.
    Donor(&'a LabeledDataset),
}

#[derive(Clone, Copy, Debug)]
pub struct Occluder<'a> {
    pub policy: MaskPolicy,
    pub fill: Fill<'a>,
    pub fourier: FourierMaskParams,
}

impl<'a> Occluder<'a> {
    pub fn new(policy: MaskPolicy, fill: Fill<'a>) -> Self {
        Occluder { policy, fill, fourier: FourierMaskParams::default() }
    }

    /// True when the output cannot depend on the seed.
    pub fn is_deterministic(&self) -> bool {
        self.policy == MaskPolicy::Saliency && matches!(self.fill, Fill::Uniform(_))
    }

    fn check(&self, data: &LabeledDataset) -> Result<()> {
        match self.fill {
            Fill::Uniform(v) if v.len() != data.shape().channels => {
                Err(Error::shape("fill channels", data.shape().channels, v.len()))
            }
            Fill::Donor(d) if d.is_empty() => Err(Error::Empty("donor dataset")),
            Fill::Donor(d) if d.shape() != data.shape() => {
                Err(Error::shape("donor image shape", data.shape().len(), d.shape().len()))
            }
            _ => Ok(()),
        }
    }

    /// Mask for one image.
    pub fn mask(&self, img: &Image, fraction: f64, item: SeedSequence, saliency: Option<&SaliencyMap>) -> Result<Mask> {
        let (h, w) = (img.height(), img.width());
        match self.policy {
            MaskPolicy::Rect => rect_mask(h, w, fraction, item.derive(stream::MASK)),
            MaskPolicy::Fourier => fourier_mask(h, w, fraction, &self.fourier, item.derive(stream::MASK)),
            MaskPolicy::Saliency => {
                let map = saliency.ok_or_else(|| {
                    Error::InvalidArgument("saliency mask policy needs a saliency map per image".into())
                })?;
                if (map.height(), map.width()) != (h, w) {
                    return Err(Error::shape("saliency map pixels", h * w, map.height() * map.width()));
                }
                saliency_mask(map, fraction)
            }
        }
    }

    /// Occluded copy of one image.
    pub fn apply(&self, img: &Image, mask: &Mask, item: SeedSequence) -> Result<Image> {
        match self.fill {
            Fill::Uniform(v) => apply_uniform(img, mask, v),
            Fill::Donor(d) => {
                let pick = item.child(stream::DONOR).rng().random_range(0..d.len());
                apply_donor(img, mask, &d.images()[pick])
            }
        }
    }
}

/// Seed for image `id` of `split` at `fraction`.
pub fn item_seed(seed: u64, split: Split, id: usize, fraction: f64) -> SeedSequence {
    SeedSequence::new(seed)
        .child(split.tag())
        .child(id as u64)
        .child(fraction.to_bits())
}

fn records<F>(data: &LabeledDataset, predict: F) -> Result<PredictionLog>
where
    F: Fn(usize) -> Result<usize> + Sync,
{
    let split = data.split();
    let records = (0..data.len())
        .into_par_iter()
        .map(|i| {
            Ok(PredictionRecord {
                split,
                index: data.ids()[i],
                true_label: data.labels()[i],
                predicted_label: predict(i)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PredictionLog::new(records)
}

/// One record per image, indexed by image id.
pub fn predict_dataset(model: &dyn Classifier, data: &LabeledDataset) -> Result<PredictionLog> {
    records(data, |i| model.predict(&data.images()[i]))
}

/// Predictions on occluded copies of every image. `saliency` is aligned with
/// the dataset's image order.
pub fn predict_occluded(
    model: &dyn Classifier,
    data: &LabeledDataset,
    fraction: f64,
    occluder: &Occluder<'_>,
    seed: u64,
    saliency: Option<&[SaliencyMap]>,
) -> Result<PredictionLog> {
    check_fraction(fraction)?;
    occluder.check(data)?;
    if let Some(s) = saliency {
        if s.len() != data.len() {
            return Err(Error::shape("saliency maps", data.len(), s.len()));
        }
    }
    records(data, |i| {
        let img = &data.images()[i];
        let item = item_seed(seed, data.split(), data.ids()[i], fraction);
        let mask = occluder.mask(img, fraction, item, saliency.map(|s| &s[i]))?;
        model.predict(&occluder.apply(img, &mask, item)?)
    })
}

/// Occluded copies of every image, in dataset order.
pub fn occlude_dataset(
    data: &LabeledDataset,
    fraction: f64,
    occluder: &Occluder<'_>,
    seed: u64,
    saliency: Option<&[SaliencyMap]>,
) -> Result<LabeledDataset> {
    check_fraction(fraction)?;
    occluder.check(data)?;
    let images = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let img = &data.images()[i];
            let item = item_seed(seed, data.split(), data.ids()[i], fraction);
            let mask = occluder.mask(img, fraction, item, saliency.map(|s| &s[i]))?;
            occluder.apply(img, &mask, item)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::with_ids(images, data.labels().to_vec(), data.ids().to_vec(), data.num_classes(), data.split())
}

/// Saliency for every image, in dataset order.
pub fn compute_saliency(source: &dyn SaliencySource, data: &LabeledDataset) -> Result<Vec<SaliencyMap>> {
    (0..data.len())
        .into_par_iter()
        .map(|i| source.saliency(&data.images()[i], data.labels()[i]))
        .collect()
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside [0, 1]")));
    }
    Ok(())
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    Ok(())
}

/// Test accuracy under rectangular occlusion, over seeds. Values are fractions.
pub fn cut_occlusion(
    model: &dyn Classifier,
    test: &LabeledDataset,
    fraction: f64,
    seeds: &[u64],
    fill: Fill<'_>,
) -> Result<SeedSummary> {
    check_seeds(seeds)?;
    let occluder = Occluder::new(MaskPolicy::Rect, fill);
    let values = seeds
        .iter()
        .map(|&s| accuracy(&predict_occluded(model, test, fraction, &occluder, s, None)?))
        .collect::<Result<Vec<_>>>()?;
    aggregate_seeds(&values)
}

pub fn cut_occlusion_curve(
    model: &dyn Classifier,
    test: &LabeledDataset,
    fractions: &[f64],
    seeds: &[u64],
    fill: Fill<'_>,
) -> Result<RobustnessCurve> {
    let mut sorted = fractions.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let values = sorted
        .iter()
        .map(|&f| cut_occlusion(model, test, f, seeds, fill))
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustnessCurve { kind: MetricKind::Cutocclusion, fractions: sorted, values })
}

/// Saliency maps for both splits, each aligned with its dataset.
#[derive(Clone, Debug, Default)]
pub struct SaliencySet {
    pub train: Vec<SaliencyMap>,
    pub test: Vec<SaliencyMap>,
}

impl SaliencySet {
    pub fn compute(source: &dyn SaliencySource, train: &LabeledDataset, test: &LabeledDataset) -> Result<Self> {
        Ok(SaliencySet { train: compute_saliency(source, train)?, test: compute_saliency(source, test)? })
    }
}

/// iOcclusion at each fraction, over seeds.
///
/// Saliency is computed once per image and re-thresholded per fraction. When
/// the occlusion cannot depend on the seed (saliency masks with a uniform
/// fill) each fraction is evaluated once and the value repeated per seed.
pub fn i_occlusion_curve(
    model: &dyn Classifier,
    train: &LabeledDataset,
    test: &LabeledDataset,
    saliency: Option<&SaliencySet>,
    fractions: &[f64],
    seeds: &[u64],
    occluder: &Occluder<'_>,
) -> Result<RobustnessCurve> {
    check_seeds(seeds)?;
    if fractions.is_empty() {
        return Err(Error::Empty("fraction list"));
    }
    let a_train = accuracy(&predict_dataset(model, train)?)?;
    let a_test = accuracy(&predict_dataset(model, test)?)?;
    // fail before the expensive part
    i_occlusion(&SplitAccuracy { a_train, a_test, a_train_i: a_train, a_test_i: a_test })?;
    let (sal_train, sal_test) = match (occluder.policy, saliency) {
        (MaskPolicy::Saliency, None) => {
            return Err(Error::InvalidArgument("saliency mask policy needs saliency maps".into()))
        }
        (_, s) => (s.map(|s| s.train.as_slice()), s.map(|s| s.test.as_slice())),
    };
    let mut samples = BTreeMap::new();
    for &f in fractions {
        let one = |seed: u64| -> Result<f64> {
            let a_train_i = accuracy(&predict_occluded(model, train, f, occluder, seed, sal_train)?)?;
            let a_test_i = accuracy(&predict_occluded(model, test, f, occluder, seed, sal_test)?)?;
            i_occlusion(&SplitAccuracy { a_train, a_test, a_train_i, a_test_i })
        };
        let values = if occluder.is_deterministic() {
            vec![one(seeds[0])?; seeds.len()]
        } else {
            seeds.iter().map(|&s| one(s)).collect::<Result<Vec<_>>>()?
        };
        samples.insert(OrderedFraction(f), values);
    }
    RobustnessCurve::from_samples(MetricKind::Iocclusion, samples)
}

/// Predictions gathered for an external model: one log per (fraction, seed)
/// covering the same records as the clean log.
#[derive(Clone, Debug)]
pub struct OccludedRun {
    pub fraction: f64,
    pub seed: u64,
    pub log: PredictionLog,
}

fn check_run(clean: &PredictionLog, run: &OccludedRun) -> Result<()> {
    let same = clean.len() == run.log.len()
        && clean
            .records()
            .iter()
            .zip(run.log.records())
            .all(|(a, b)| (a.split, a.index, a.true_label) == (b.split, b.index, b.true_label));
    if !same {
        return Err(Error::LogMismatch(format!(
            "occluded log at fraction {} seed {} does not cover the clean log's records",
            run.fraction, run.seed
        )));
    }
    Ok(())
}

/// iOcclusion from prediction logs that hold both splits.
pub fn i_occlusion_from_logs(clean: &PredictionLog, runs: &[OccludedRun]) -> Result<RobustnessCurve> {
    if runs.is_empty() {
        return Err(Error::Empty("occluded runs"));
    }
    let a_train = accuracy(&clean.split(Split::Train))?;
    let a_test = accuracy(&clean.split(Split::Test))?;
    let mut samples: BTreeMap<OrderedFraction, Vec<f64>> = BTreeMap::new();
    for run in runs {
        check_run(clean, run)?;
        let acc = SplitAccuracy {
            a_train,
            a_test,
            a_train_i: accuracy(&run.log.split(Split::Train))?,
            a_test_i: accuracy(&run.log.split(Split::Test))?,
        };
        samples.entry(OrderedFraction(run.fraction)).or_default().push(i_occlusion(&acc)?);
    }
    RobustnessCurve::from_samples(MetricKind::Iocclusion, samples)
}

/// CutOcclusion from test-split prediction logs.
pub fn cut_occlusion_from_logs(clean: &PredictionLog, runs: &[OccludedRun]) -> Result<RobustnessCurve> {
    if runs.is_empty() {
        return Err(Error::Empty("occluded runs"));
    }
    let mut samples: BTreeMap<OrderedFraction, Vec<f64>> = BTreeMap::new();
    for run in runs {
        check_run(clean, run)?;
        samples
            .entry(OrderedFraction(run.fraction))
            .or_default()
            .push(accuracy(&run.log.split(Split::Test))?);
    }
    RobustnessCurve::from_samples(MetricKind::Cutocclusion, samples)
}

/// Per-class misclassification deltas at one fraction, averaged over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaSummary {
    pub fraction: f64,
    pub per_class: Vec<SeedSummary>,
    pub runs: Vec<MisclassDelta>,
}

pub fn summarize_deltas(fraction: f64, runs: Vec<MisclassDelta>) -> Result<DeltaSummary> {
    let classes = runs.first().ok_or(Error::Empty("delta runs"))?.deltas.len();
    let per_class = (0..classes)
        .map(|c| aggregate_seeds(&runs.iter().map(|r| r.deltas[c] as f64).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DeltaSummary { fraction, per_class, runs })
}

/// Misclassification deltas on the test split for every (fraction, seed).
pub fn misclass_deltas(
    model: &dyn Classifier,
    test: &LabeledDataset,
    fractions: &[f64],
    seeds: &[u64],
    occluder: &Occluder<'_>,
    saliency: Option<&[SaliencyMap]>,
) -> Result<Vec<DeltaSummary>> {
    check_seeds(seeds)?;
    let clean = predict_dataset(model, test)?;
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let runs = seeds
            .iter()
            .map(|&s| {
                let log = predict_occluded(model, test, f, occluder, s, saliency)?;
                misclass_delta(&clean, &log, test.num_classes(), format!("{:?} occlusion {f}", occluder.policy))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(summarize_deltas(f, runs)?);
    }
    Ok(out)
}

/// Misclassification deltas from logs; `num_classes` bounds the labels.
pub fn misclass_deltas_from_logs(
    clean: &PredictionLog,
    runs: &[OccludedRun],
    num_classes: usize,
) -> Result<Vec<DeltaSummary>> {
    let mut grouped: BTreeMap<OrderedFraction, Vec<MisclassDelta>> = BTreeMap::new();
    for run in runs {
        let d = misclass_delta(clean, &run.log, num_classes, format!("fraction {} seed {}", run.fraction, run.seed))?;
        grouped.entry(OrderedFraction(run.fraction)).or_default().push(d);
    }
    if grouped.is_empty() {
        return Err(Error::Empty("occluded runs"));
    }
    grouped.into_iter().map(|(f, v)| summarize_deltas(f.0, v)).collect()
}
