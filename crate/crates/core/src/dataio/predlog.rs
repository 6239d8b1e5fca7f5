//! Prediction logs as JSON Lines, one record object per line:
//!
//! ```text
//! {"split":"test","index":0,"true_label":3,"predicted_label":5}
//! ```
//!
//! Objects must carry exactly these four fields. Records are kept sorted by
//! `(split, index)`; a repeated pair is an error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::types::{Split, SubsetIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub split: Split,
    pub index: usize,
    pub true_label: usize,
    pub predicted_label: usize,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.true_label == self.predicted_label
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PredictionLog {
    records: Vec<PredictionRecord>,
}

impl PredictionLog {
    pub fn new(records: Vec<PredictionRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert((r.split, r.index), r).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate record ({}, {})", r.split, r.index)));
            }
        }
        Ok(PredictionLog { records: map.into_values().collect() })
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> PredictionLog {
        PredictionLog { records: self.records.iter().filter(|r| r.split == split).copied().collect() }
    }

    /// Keeps records of the subset's split whose index is listed; other splits pass through.
    pub fn filter(&self, subset: &SubsetIndex) -> PredictionLog {
        PredictionLog {
            records: self
                .records
                .iter()
                .filter(|r| r.split != subset.split() || subset.contains(r.index))
                .copied()
                .collect(),
        }
    }

    pub fn merge(&self, other: &PredictionLog) -> Result<PredictionLog> {
        PredictionLog::new(self.records.iter().chain(&other.records).copied().collect())
    }

    /// Every label below `num_classes`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(r) = self
            .records
            .iter()
            .find(|r| r.true_label >= num_classes || r.predicted_label >= num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "record ({}, {}) has a label outside [0, {num_classes})",
                r.split, r.index
            )));
        }
        Ok(())
    }
}

/// Parses JSON Lines text. Blank lines are ignored.
pub fn parse_prediction_log(text: &str, path: &Path) -> Result<PredictionLog> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())), path)
}

fn parse_lines<I>(lines: I, path: &Path) -> Result<PredictionLog>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut seen: BTreeMap<(Split, usize), usize> = BTreeMap::new();
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(first) = seen.insert((rec.split, rec.index), line_no) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("duplicate record ({}, {}) first seen on line {first}", rec.split, rec.index),
            });
        }
        records.push(rec);
    }
    PredictionLog::new(records)
}

pub fn read_prediction_log(path: &Path) -> Result<PredictionLog> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lines(BufReader::new(f).lines(), path)
}

pub fn write_prediction_log(path: &Path, log: &PredictionLog) -> Result<()> {
    atomic_write(path, |w| {
        for r in log.records() {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}
