//! Accuracy, the iOcclusion ratio, misclassification deltas and seed aggregation.
//!
//! Accuracies are fractions in `[0, 1]` throughout; presentation scaling
//! (percent) happens at the reporting layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{MetricKind, PredictionLog};
use crate::error::{Error, Result};

/// Smallest clean generalisation gap for which iOcclusion is defined.
pub const DEFAULT_GAP_EPSILON: f64 = 1e-6;

/// Fraction of records whose prediction equals the true label.
pub fn accuracy(log: &PredictionLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Empty("prediction log"));
    }
    let correct = log.records().iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / log.len() as f64)
}

/// Clean and occluded accuracies on both splits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub a_train: f64,
    pub a_test: f64,
    pub a_train_i: f64,
    pub a_test_i: f64,
}

impl SplitAccuracy {
    pub fn scaled(&self, k: f64) -> Self {
        SplitAccuracy {
            a_train: self.a_train * k,
            a_test: self.a_test * k,
            a_train_i: self.a_train_i * k,
            a_test_i: self.a_test_i * k,
        }
    }
}

/// `|(a_train_i - a_test_i) / (a_train - a_test)|`.
///
/// A clean gap smaller than `epsilon` in magnitude is an error: the ratio is
/// undefined there and is never clamped.
pub fn i_occlusion_with_epsilon(acc: &SplitAccuracy, epsilon: f64) -> Result<f64> {
    let gap = acc.a_train - acc.a_test;
    if !(gap.abs() >= epsilon) {
        return Err(Error::ZeroGeneralisationGap { gap: gap.abs(), epsilon });
    }
    Ok(((acc.a_train_i - acc.a_test_i) / gap).abs())
}

pub fn i_occlusion(acc: &SplitAccuracy) -> Result<f64> {
    i_occlusion_with_epsilon(acc, DEFAULT_GAP_EPSILON)
}

/// Mean and sample standard deviation over repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn aggregate_seeds(values: &[f64]) -> Result<SeedSummary> {
    if values.is_empty() {
        return Err(Error::Empty("seed values"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(SeedSummary { mean, std, n })
}

/// Per-class change in "wrongly predicted as this class" counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisclassDelta {
    pub deltas: Vec<i64>,
    pub distortion: String,
}

impl MisclassDelta {
    pub fn total(&self) -> i64 {
        self.deltas.iter().sum()
    }

    /// Class with the largest increase; ties to the lowest index.
    pub fn largest_increase(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (c, &d) in self.deltas.iter().enumerate() {
            if best.is_none_or(|b| d > self.deltas[b]) {
                best = Some(c);
            }
        }
        best
    }
}

fn wrong_as(log: &PredictionLog, num_classes: usize) -> Vec<i64> {
    let mut counts = vec![0i64; num_classes];
    for r in log.records().iter().filter(|r| !r.is_correct()) {
        counts[r.predicted_label] += 1;
    }
    counts
}

/// For each class `c`: wrong-as-`c` on `distorted` minus wrong-as-`c` on `clean`.
pub fn misclass_delta(
    clean: &PredictionLog,
    distorted: &PredictionLog,
    num_classes: usize,
    distortion: impl Into<String>,
) -> Result<MisclassDelta> {
    clean.check_labels(num_classes)?;
    distorted.check_labels(num_classes)?;
    if clean.len() != distorted.len() {
        return Err(Error::LogMismatch(format!(
            "{} clean records vs {} distorted records",
            clean.len(),
            distorted.len()
        )));
    }
    // Both logs are sorted by (split, index), so position-wise comparison suffices.
    for (a, b) in clean.records().iter().zip(distorted.records()) {
        if (a.split, a.index) != (b.split, b.index) {
            return Err(Error::LogMismatch(format!(
                "record ({}, {}) has no counterpart; found ({}, {})",
                a.split, a.index, b.split, b.index
            )));
        }
        if a.true_label != b.true_label {
            return Err(Error::LogMismatch(format!(
                "record ({}, {}) has true label {} vs {}",
                a.split, a.index, a.true_label, b.true_label
            )));
        }
    }
    let before = wrong_as(clean, num_classes);
    let after = wrong_as(distorted, num_classes);
    Ok(MisclassDelta {
        deltas: after.iter().zip(&before).map(|(a, b)| a - b).collect(),
        distortion: distortion.into(),
    })
}

/// Metric values per occlusion fraction, aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub kind: MetricKind,
    pub fractions: Vec<f64>,
    pub values: Vec<SeedSummary>,
}

impl RobustnessCurve {
    /// Builds a curve from per-fraction raw values; fractions are sorted ascending.
    pub fn from_samples(kind: MetricKind, samples: BTreeMap<OrderedFraction, Vec<f64>>) -> Result<Self> {
        let mut fractions = Vec::with_capacity(samples.len());
        let mut values = Vec::with_capacity(samples.len());
        for (f, v) in samples {
            fractions.push(f.0);
            values.push(aggregate_seeds(&v)?);
        }
        Ok(RobustnessCurve { kind, fractions, values })
    }

    pub fn at(&self, fraction: f64) -> Option<&SeedSummary> {
        self.fractions.iter().position(|&f| f == fraction).map(|i| &self.values[i])
    }
}

/// Total-ordered wrapper so fractions can key a map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderedFraction(pub f64);

impl Eq for OrderedFraction {}

impl PartialOrd for OrderedFraction {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedFraction {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
