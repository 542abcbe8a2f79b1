//! Datasets of precomputed patch-pair features, their train/test split, and
//! a ground-truth oracle for simulated annotation.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// Binary change label. Serialized as `0` (no change) or `1` (change).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    NoChange,
    Change,
}

impl Label {
    pub fn is_change(self) -> bool {
        self == Label::Change
    }

    /// `+1.0` for change, `-1.0` for no change.
    pub fn sign(self) -> f64 {
        match self {
            Label::Change => 1.0,
            Label::NoChange => -1.0,
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        match label {
            Label::NoChange => 0,
            Label::Change => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::NoChange),
            1 => Ok(Label::Change),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<bool> for Label {
    fn from(change: bool) -> Self {
        if change {
            Label::Change
        } else {
            Label::NoChange
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(default, rename = "label", skip_serializing_if = "Option::is_none")]
    pub truth_label: Option<Label>,
    /// Locators of the two display images (before, after). Opaque to the engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_refs: Option<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Deserialize)]
struct RawPool {
    samples: Vec<Sample>,
    split: Vec<Split>,
}

/// An ordered, validated collection of samples. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct DataPool {
    samples: Vec<Sample>,
    split: Vec<Split>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TryFrom<RawPool> for DataPool {
    type Error = Error;

    fn try_from(raw: RawPool) -> Result<Self> {
        let pool = DataPool::new(raw.samples)?;
        pool.with_split(raw.split)
    }
}

impl DataPool {
    /// Validates the samples and tags every one of them as training data.
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("pool is empty"));
        }
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(invalid("samples must have at least one feature"));
        }
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::Format {
                    location: format!("row {} (id {:?})", i + 1, s.id),
                    message: format!("expected {dim} features, found {}", s.features.len()),
                });
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(invalid(format!("sample {:?} has non-finite feature f{j}", s.id)));
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        let split = vec![Split::Train; samples.len()];
        Ok(Self { samples, split, index })
    }

    fn with_split(mut self, split: Vec<Split>) -> Result<Self> {
        if split.len() != self.samples.len() {
            return Err(invalid(format!(
                "split has {} tags for {} samples",
                split.len(),
                self.samples.len()
            )));
        }
        self.split = split;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.position(id).map(|i| &self.samples[i])
    }

    /// Pool indices tagged `split`, in pool order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn has_all_labels(&self) -> bool {
        self.samples.iter().all(|s| s.truth_label.is_some())
    }

    /// Counts of (negative, positive) ground-truth labels among `indices`.
    pub fn class_counts(&self, indices: &[usize]) -> (usize, usize) {
        indices.iter().fold((0, 0), |(neg, pos), &i| match self.samples[i].truth_label {
            Some(Label::Change) => (neg, pos + 1),
            Some(Label::NoChange) => (neg + 1, pos),
            None => (neg, pos),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolFormat {
    Csv,
    Jsonl,
}

impl PoolFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(PoolFormat::Csv),
            "jsonl" | "ndjson" => Some(PoolFormat::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for PoolFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PoolFormat::Csv),
            "jsonl" => Ok(PoolFormat::Jsonl),
            other => Err(invalid(format!("unknown pool format {other:?}"))),
        }
    }
}

const IMAGE_COLUMNS: [&str; 2] = ["image_t0", "image_t1"];

pub fn load_pool(path: &Path, format: PoolFormat) -> Result<DataPool> {
    let samples = match format {
        PoolFormat::Csv => read_csv(path)?,
        PoolFormat::Jsonl => read_jsonl(path)?,
    };
    DataPool::new(samples)
}

fn read_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let width = headers.len();

    let mut id_col = None;
    let mut label_col = None;
    let mut image_cols = [None, None];
    let mut feature_cols = Vec::new();
    for (c, name) in headers.iter().enumerate() {
        match name {
            "id" => id_col = Some(c),
            "label" => label_col = Some(c),
            n if n == IMAGE_COLUMNS[0] => image_cols[0] = Some(c),
            n if n == IMAGE_COLUMNS[1] => image_cols[1] = Some(c),
            _ => feature_cols.push(c),
        }
    }
    let id_col = id_col.ok_or_else(|| Error::Format {
        location: "header".into(),
        message: "missing `id` column".into(),
    })?;

    let mut samples = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let id = record.get(id_col).unwrap_or_default().to_string();
        let location = || format!("row {row} (id {id:?})");
        if record.len() != width {
            return Err(Error::Format {
                location: location(),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let features = feature_cols
            .iter()
            .map(|&c| {
                record[c].parse::<f64>().map_err(|e| Error::Format {
                    location: location(),
                    message: format!("column {:?}: {e}", &headers[c]),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let truth_label = match label_col.map(|c| &record[c]) {
            None | Some("") => None,
            Some("0") => Some(Label::NoChange),
            Some("1") => Some(Label::Change),
            Some(other) => {
                return Err(Error::Format {
                    location: location(),
                    message: format!("label must be 0, 1 or empty, got {other:?}"),
                })
            }
        };
        let image_refs = match image_cols {
            [Some(a), Some(b)] if !record[a].is_empty() && !record[b].is_empty() => {
                Some([record[a].to_string(), record[b].to_string()])
            }
            _ => None,
        };
        samples.push(Sample { id, features, truth_label, image_refs });
    }
    Ok(samples)
}

fn read_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (r, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Format {
            location: format!("line {}", r + 1),
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes the samples (not the split) in a form `load_pool` reads back
/// verbatim.
pub fn write_pool(pool: &DataPool, path: &Path, format: PoolFormat) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        PoolFormat::Jsonl => {
            for s in pool.samples() {
                serde_json::to_writer(&mut out, s)?;
                out.write_all(b"\n")?;
            }
        }
        PoolFormat::Csv => {
            let with_labels = pool.samples().iter().any(|s| s.truth_label.is_some());
            let with_images = pool.samples().iter().any(|s| s.image_refs.is_some());
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec!["id".to_string()];
            if with_labels {
                header.push("label".into());
            }
            if with_images {
                header.extend(IMAGE_COLUMNS.iter().map(|s| s.to_string()));
            }
            header.extend((0..pool.dim()).map(|j| format!("f{j}")));
            w.write_record(&header)?;
            for s in pool.samples() {
                let mut row = vec![s.id.clone()];
                if with_labels {
                    row.push(s.truth_label.map(|l| u8::from(l).to_string()).unwrap_or_default());
                }
                if with_images {
                    match &s.image_refs {
                        Some([a, b]) => row.extend([a.clone(), b.clone()]),
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                row.extend(s.features.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parameters of the synthetic imbalanced change-detection generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub positive_fraction: f64,
    pub n_modes_per_class: usize,
    pub feature_dim: usize,
    pub mode_spread: f64,
    pub within_mode_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            positive_fraction: 0.02,
            n_modes_per_class: 3,
            feature_dim: 8,
            mode_spread: 2.0,
            within_mode_noise: 0.35,
            seed: 1,
        }
    }
}

/// Fraction of `mode_spread` placed along the class axis (feature 0).
/// Positive modes sit in the `f0 > 0` cap of the sphere, negative modes in
/// the `f0 < 0` cap.
const CLASS_AXIS_SHARE: f64 = 0.5;

impl SyntheticSpec {
    pub fn n_positive(&self) -> usize {
        (self.positive_fraction * self.n_samples as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(invalid("positive_fraction must lie in (0, 1)"));
        }
        if self.n_modes_per_class == 0 || self.feature_dim == 0 {
            return Err(invalid("n_modes_per_class and feature_dim must be positive"));
        }
        if !(self.mode_spread.is_finite() && self.mode_spread > 0.0) {
            return Err(invalid("mode_spread must be positive"));
        }
        if !(self.within_mode_noise.is_finite() && self.within_mode_noise > 0.0) {
            return Err(invalid("within_mode_noise must be positive"));
        }
        let pos = self.n_positive();
        let neg = self.n_samples.saturating_sub(pos);
        if pos < self.n_modes_per_class || neg < self.n_modes_per_class {
            return Err(invalid(format!(
                "{pos} positives / {neg} negatives cannot populate {} modes per class",
                self.n_modes_per_class
            )));
        }
        Ok(())
    }
}

fn mode_center<R: Rng>(rng: &mut R, spec: &SyntheticSpec, label: Label) -> Vec<f64> {
    let dim = spec.feature_dim;
    let mut center = vec![0.0; dim];
    if dim == 1 {
        center[0] = label.sign() * spec.mode_spread;
        return center;
    }
    let axis = CLASS_AXIS_SHARE;
    let tangent = (1.0 - axis * axis).sqrt();
    let mut dir: Vec<f64> = (1..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    dir.iter_mut().for_each(|v| *v /= norm);
    center[0] = label.sign() * axis * spec.mode_spread;
    for (c, d) in center[1..].iter_mut().zip(&dir) {
        *c = tangent * spec.mode_spread * d;
    }
    center
}

/// Draws a labeled pool from isotropic Gaussian modes. Pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataPool> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Synthetic, 0);
    let modes = |rng: &mut _, label| {
        (0..spec.n_modes_per_class)
            .map(|_| mode_center(rng, spec, label))
            .collect::<Vec<_>>()
    };
    let pos_modes = modes(&mut rng, Label::Change);
    let neg_modes = modes(&mut rng, Label::NoChange);

    let n_pos = spec.n_positive();
    let mut labels: Vec<Label> = (0..spec.n_samples)
        .map(|i| Label::from(i < n_pos))
        .collect();
    labels.shuffle(&mut rng);

    let (mut pos_seen, mut neg_seen) = (0usize, 0usize);
    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let center = match label {
                Label::Change => {
                    pos_seen += 1;
                    &pos_modes[(pos_seen - 1) % spec.n_modes_per_class]
                }
                Label::NoChange => {
                    neg_seen += 1;
                    &neg_modes[(neg_seen - 1) % spec.n_modes_per_class]
                }
            };
            let features = center
                .iter()
                .map(|c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + spec.within_mode_noise * z
                })
                .collect();
            Sample {
                id: format!("s{i:05}"),
                features,
                truth_label: Some(label),
                image_refs: None,
            }
        })
        .collect();
    DataPool::new(samples)
}

/// Random train/test partition, deterministic per seed.
pub fn split_pool(pool: &DataPool, train_fraction: f64, seed: u64) -> Result<DataPool> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid("train_fraction must lie in (0, 1)"));
    }
    let n = pool.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(invalid(format!(
            "train_fraction {train_fraction} leaves an empty side on {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Stream::Split, 0));
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    pool.clone().with_split(split)
}

/// Answers label queries from ground truth.
pub fn simulated_oracle(pool: &DataPool, ids: &[String]) -> Result<Vec<(String, Label)>> {
    let mut seen = HashSet::new();
    ids.iter()
        .map(|id| {
            let sample = pool.get(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
            let label = sample
                .truth_label
                .ok_or_else(|| Error::OracleUnavailable(id.clone()))?;
            Ok((id.clone(), label))
        })
        .collect()
}
