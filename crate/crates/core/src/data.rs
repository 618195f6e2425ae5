//! Synthetic binary tasks with controllable label noise and class imbalance,
//! plus dataset file IO and stratified splitting.
//!
//! Generators record a provenance tree (generator, parameters, and the RNG
//! counter at entry) from which any synthetic dataset, including split and
//! post-hoc-noised derivatives, can be regenerated bit-exactly. Pre-flip
//! labels are kept alongside flipped ones so experiments can train on noisy
//! labels while scoring against clean ground truth.

use std::fmt;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("flip_rate must lie in [0, 0.5), got {0}")]
    FlipRateRange(f64),
    #[error("imbalance must lie in (0, 1), got {0}")]
    ImbalanceRange(f64),
    #[error("generator needs at least {min} examples, got {got}")]
    TooFewExamples { got: usize, min: usize },
    #[error("feature dimension must be at least 1")]
    DimRange,
    #[error("test_fraction must lie in (0, 1), got {0}")]
    TestFractionRange(f64),
    #[error("split would leave an empty side (n = {n}, test_fraction = {test_fraction})")]
    DegenerateSplit { n: usize, test_fraction: f64 },
    #[error("non-finite feature value at example {index}")]
    NonFiniteFeature { index: usize },
    #[error("label must be 0 or 1, got {value}")]
    LabelRange { value: i64 },
    #[error("dataset is empty")]
    Empty,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}:{line}: expected {want} features, found {got}")]
    DimMismatch { path: String, line: usize, got: usize, want: usize },
    #[error("unknown dataset format {0:?}; expected csv or jsonl")]
    UnknownFormat(String),
    #[error("file provenance cannot be regenerated; reload {path} instead")]
    FileProvenance { path: String },
    #[error("content hash of {path} is {got}, provenance pinned {want}")]
    HashMismatch { path: String, got: String, want: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One labeled input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: u8,
}

impl Example {
    pub fn new(features: Vec<f64>, label: u8) -> Result<Example, DataError> {
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFiniteFeature { index });
        }
        if label > 1 {
            return Err(DataError::LabelRange { value: label as i64 });
        }
        Ok(Example { features, label })
    }
}

/// Label-corruption controls: symmetric flip probability and the fraction of
/// positive-class examples the generator should produce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub flip_rate: f64,
    pub imbalance: f64,
}

impl Default for NoiseSpec {
    fn default() -> NoiseSpec {
        NoiseSpec { flip_rate: 0.0, imbalance: 0.5 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.flip_rate >= 0.0 && self.flip_rate < 0.5) {
            return Err(DataError::FlipRateRange(self.flip_rate));
        }
        if !(self.imbalance > 0.0 && self.imbalance < 1.0) {
            return Err(DataError::ImbalanceRange(self.imbalance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileFormat::Csv => f.write_str("csv"),
            FileFormat::Jsonl => f.write_str("jsonl"),
        }
    }
}

impl FromStr for FileFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<FileFormat, DataError> {
        match s {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" => Ok(FileFormat::Jsonl),
            other => Err(DataError::UnknownFormat(other.to_string())),
        }
    }
}

/// Which side of a split a derived dataset is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
}

/// Complete reconstruction record: synthetic roots carry generator
/// parameters plus the RNG counter at entry; derived nodes (splits,
/// post-hoc noise) wrap their parent. File roots pin a content hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Blobs {
        n: usize,
        mean_separation: f64,
        d: usize,
        flip_rate: f64,
        imbalance: f64,
        seed: u64,
    },
    Xor {
        n: usize,
        scale: f64,
        flip_rate: f64,
        imbalance: f64,
        seed: u64,
    },
    File {
        path: String,
        format: FileFormat,
        fnv1a64: String,
    },
    Split {
        of: Box<Provenance>,
        test_fraction: f64,
        seed: u64,
        role: SplitRole,
    },
    Noised {
        of: Box<Provenance>,
        flip_rate: f64,
        seed: u64,
    },
}

/// An immutable set of labeled examples with uniform feature dimension.
///
/// `clean_labels[i]` is the pre-flip label of `examples[i]` whenever label
/// noise has been applied; it is `None` for loaded files and never leaves the
/// process through dataset files (provenance regenerates it instead).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    dim: usize,
    provenance: Provenance,
    clean_labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        provenance: Provenance,
        clean_labels: Option<Vec<u8>>,
    ) -> Result<Dataset, DataError> {
        let dim = match examples.first() {
            Some(e) => e.features.len(),
            None => return Err(DataError::Empty),
        };
        for (line, e) in examples.iter().enumerate() {
            if e.features.len() != dim {
                return Err(DataError::DimMismatch {
                    path: "<memory>".to_string(),
                    line: line + 1,
                    got: e.features.len(),
                    want: dim,
                });
            }
            if let Some(index) = e.features.iter().position(|v| !v.is_finite()) {
                let _ = index;
                return Err(DataError::NonFiniteFeature { index: line });
            }
            if e.label > 1 {
                return Err(DataError::LabelRange { value: e.label as i64 });
            }
        }
        if let Some(clean) = &clean_labels {
            assert_eq!(clean.len(), examples.len(), "clean-label bookkeeping out of sync");
        }
        Ok(Dataset { examples, dim, provenance, clean_labels })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Pre-flip labels when noise bookkeeping exists, else the stored labels.
    pub fn clean_label(&self, i: usize) -> u8 {
        match &self.clean_labels {
            Some(clean) => clean[i],
            None => self.examples[i].label,
        }
    }

    pub fn has_noise_bookkeeping(&self) -> bool {
        self.clean_labels.is_some()
    }

    /// Fraction of examples whose stored label is 1.
    pub fn positive_fraction(&self) -> f64 {
        let pos = self.examples.iter().filter(|e| e.label == 1).count();
        pos as f64 / self.examples.len() as f64
    }

    /// Fraction of examples whose stored label differs from the clean label.
    pub fn flipped_fraction(&self) -> f64 {
        let flipped = (0..self.len())
            .filter(|&i| self.examples[i].label != self.clean_label(i))
            .count();
        flipped as f64 / self.len() as f64
    }

    /// Indices of examples carrying each label: (zeros, ones).
    pub fn indices_by_label(&self) -> (Vec<usize>, Vec<usize>) {
        let mut zeros = Vec::new();
        let mut ones = Vec::new();
        for (i, e) in self.examples.iter().enumerate() {
            if e.label == 0 {
                zeros.push(i);
            } else {
                ones.push(i);
            }
        }
        (zeros, ones)
    }
}

fn flip_labels(examples: &mut [Example], flip_rate: f64, rng: &mut Rng) -> Vec<u8> {
    let clean: Vec<u8> = examples.iter().map(|e| e.label).collect();
    if flip_rate > 0.0 {
        for e in examples.iter_mut() {
            if rng.bernoulli(flip_rate) {
                e.label = 1 - e.label;
            }
        }
    }
    clean
}

/// Exact per-class counts for a target positive fraction; both classes stay
/// non-empty.
fn class_counts(n: usize, imbalance: f64) -> (usize, usize) {
    let pos = ((n as f64 * imbalance).round() as usize).clamp(1, n - 1);
    (n - pos, pos)
}

/// Two unit-covariance Gaussian clusters in d dimensions with means
/// ±(mean_separation/2) on the first axis; positive class on the positive
/// side. Labels are then flipped independently at `noise.flip_rate`.
pub fn gen_blobs(
    n: usize,
    mean_separation: f64,
    d: usize,
    noise: NoiseSpec,
    rng: &mut Rng,
) -> Result<Dataset, DataError> {
    noise.validate()?;
    if n < 2 {
        return Err(DataError::TooFewExamples { got: n, min: 2 });
    }
    if d < 1 {
        return Err(DataError::DimRange);
    }
    let seed = rng.state();
    let (neg, pos) = class_counts(n, noise.imbalance);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i >= neg);
        let center = if label == 1 { mean_separation / 2.0 } else { -mean_separation / 2.0 };
        let mut features = Vec::with_capacity(d);
        features.push(center + rng.normal());
        for _ in 1..d {
            features.push(rng.normal());
        }
        examples.push(Example { features, label });
    }
    debug_assert_eq!(examples.iter().filter(|e| e.label == 1).count(), pos);
    let clean = flip_labels(&mut examples, noise.flip_rate, rng);
    let provenance = Provenance::Blobs {
        n,
        mean_separation,
        d,
        flip_rate: noise.flip_rate,
        imbalance: noise.imbalance,
        seed,
    };
    Dataset::new(examples, provenance, Some(clean))
}

/// Four unit-covariance Gaussian lobes at (±s, ±s); the label is the XOR of
/// the lobe-center signs, so the positive class sits on the off-diagonal.
pub fn gen_xor(
    n: usize,
    scale: f64,
    noise: NoiseSpec,
    rng: &mut Rng,
) -> Result<Dataset, DataError> {
    noise.validate()?;
    if n < 4 {
        return Err(DataError::TooFewExamples { got: n, min: 4 });
    }
    let seed = rng.state();
    let (neg, pos) = class_counts(n, noise.imbalance);
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i >= neg);
        // Within each class, alternate between its two lobes.
        let within = if label == 1 { i - neg } else { i };
        let (cx, cy) = match (label, within % 2) {
            (0, 0) => (scale, scale),
            (0, _) => (-scale, -scale),
            (_, 0) => (scale, -scale),
            (_, _) => (-scale, scale),
        };
        let features = vec![cx + rng.normal(), cy + rng.normal()];
        examples.push(Example { features, label });
    }
    debug_assert_eq!(examples.iter().filter(|e| e.label == 1).count(), pos);
    let clean = flip_labels(&mut examples, noise.flip_rate, rng);
    let provenance = Provenance::Xor {
        n,
        scale,
        flip_rate: noise.flip_rate,
        imbalance: noise.imbalance,
        seed,
    };
    Dataset::new(examples, provenance, Some(clean))
}

/// Flip each label independently at `flip_rate`, recording pre-flip labels.
/// Used to corrupt a training split after a clean split, so test labels stay
/// clean ground truth.
pub fn apply_label_noise(
    dataset: &Dataset,
    flip_rate: f64,
    rng: &mut Rng,
) -> Result<Dataset, DataError> {
    if !(flip_rate >= 0.0 && flip_rate < 0.5) {
        return Err(DataError::FlipRateRange(flip_rate));
    }
    let seed = rng.state();
    let mut examples = dataset.examples.clone();
    let clean = flip_labels(&mut examples, flip_rate, rng);
    let provenance = Provenance::Noised {
        of: Box::new(dataset.provenance.clone()),
        flip_rate,
        seed,
    };
    Dataset::new(examples, provenance, Some(clean))
}

/// Disjoint, exhaustive, label-stratified split; the test side receives
/// `round(count · test_fraction)` examples of each class.
pub fn split(
    dataset: &Dataset,
    test_fraction: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::TestFractionRange(test_fraction));
    }
    let seed = rng.state();
    let (zeros, ones) = dataset.indices_by_label();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for mut class in [zeros, ones] {
        rng.shuffle(&mut class);
        let take = (class.len() as f64 * test_fraction).round() as usize;
        let take = take.min(class.len());
        test_idx.extend_from_slice(&class[..take]);
        train_idx.extend_from_slice(&class[take..]);
    }
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(DataError::DegenerateSplit { n: dataset.len(), test_fraction });
    }
    let build = |idx: &[usize], role: SplitRole| {
        let examples: Vec<Example> = idx.iter().map(|&i| dataset.examples[i].clone()).collect();
        let clean = dataset
            .clean_labels
            .as_ref()
            .map(|clean| idx.iter().map(|&i| clean[i]).collect());
        let provenance = Provenance::Split {
            of: Box::new(dataset.provenance.clone()),
            test_fraction,
            seed,
            role,
        };
        Dataset::new(examples, provenance, clean)
    };
    Ok((build(&train_idx, SplitRole::Train)?, build(&test_idx, SplitRole::Test)?))
}

/// Rebuild a dataset from its provenance tree. File roots are reloaded and
/// their content hash verified; synthetic roots and derived nodes replay the
/// recorded RNG counters.
pub fn regenerate(provenance: &Provenance) -> Result<Dataset, DataError> {
    match provenance {
        Provenance::Blobs { n, mean_separation, d, flip_rate, imbalance, seed } => gen_blobs(
            *n,
            *mean_separation,
            *d,
            NoiseSpec { flip_rate: *flip_rate, imbalance: *imbalance },
            &mut Rng::new(*seed),
        ),
        Provenance::Xor { n, scale, flip_rate, imbalance, seed } => gen_xor(
            *n,
            *scale,
            NoiseSpec { flip_rate: *flip_rate, imbalance: *imbalance },
            &mut Rng::new(*seed),
        ),
        Provenance::File { path, format, fnv1a64 } => {
            let dataset = load_dataset(Path::new(path), *format)?;
            let got = match dataset.provenance() {
                Provenance::File { fnv1a64, .. } => fnv1a64.clone(),
                _ => unreachable!("load_dataset always returns file provenance"),
            };
            if got != *fnv1a64 {
                return Err(DataError::HashMismatch {
                    path: path.clone(),
                    got,
                    want: fnv1a64.clone(),
                });
            }
            Ok(dataset)
        }
        Provenance::Split { of, test_fraction, seed, role } => {
            let parent = regenerate(of)?;
            let (train, test) = split(&parent, *test_fraction, &mut Rng::new(*seed))?;
            Ok(match role {
                SplitRole::Train => train,
                SplitRole::Test => test,
            })
        }
        Provenance::Noised { of, flip_rate, seed } => {
            let parent = regenerate(of)?;
            apply_label_noise(&parent, *flip_rate, &mut Rng::new(*seed))
        }
    }
}

/// FNV-1a 64-bit content hash as fixed-width hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = fnv::FnvHasher::default();
    hasher.write(bytes);
    format!("{:016x}", hasher.finish())
}

#[derive(Serialize, Deserialize)]
struct JsonlRow {
    features: Vec<f64>,
    label: i64,
}

/// Parse a dataset file. CSV expects the header `f0,...,f{d-1},label`; JSONL
/// expects one `{"features": [...], "label": 0|1}` object per line. Labels
/// outside {0, 1}, non-finite features, and ragged dimensions are rejected
/// with their line number.
pub fn load_dataset(path: &Path, format: FileFormat) -> Result<Dataset, DataError> {
    let display = path.display().to_string();
    let raw = fs::read(path)?;
    let text = String::from_utf8(raw.clone()).map_err(|e| DataError::Parse {
        path: display.clone(),
        line: 0,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let parse = |line: usize, message: String| DataError::Parse {
        path: display.clone(),
        line,
        message,
    };
    let mut examples = Vec::new();
    match format {
        FileFormat::Csv => {
            let mut lines = text.lines().enumerate();
            let (_, header) = lines
                .next()
                .ok_or_else(|| parse(1, "missing header".to_string()))?;
            let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
            if cols.len() < 2 || cols[cols.len() - 1] != "label" {
                return Err(parse(1, format!("header must be f0,...,f{{d-1}},label, got {header:?}")));
            }
            let d = cols.len() - 1;
            for (i, col) in cols[..d].iter().enumerate() {
                if *col != format!("f{i}") {
                    return Err(parse(1, format!("feature column {i} must be named f{i}, got {col:?}")));
                }
            }
            for (idx, line) in lines {
                let line_no = idx + 1;
                let line = line.trim_end_matches('\r');
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != d + 1 {
                    return Err(DataError::DimMismatch {
                        path: display.clone(),
                        line: line_no,
                        got: fields.len() - 1,
                        want: d,
                    });
                }
                let mut features = Vec::with_capacity(d);
                for field in &fields[..d] {
                    let v: f64 = field
                        .parse()
                        .map_err(|e| parse(line_no, format!("bad feature value {field:?}: {e}")))?;
                    if !v.is_finite() {
                        return Err(parse(line_no, format!("non-finite feature value {field:?}")));
                    }
                    features.push(v);
                }
                let label: i64 = fields[d]
                    .parse()
                    .map_err(|e| parse(line_no, format!("bad label {:?}: {e}", fields[d])))?;
                if label != 0 && label != 1 {
                    return Err(parse(line_no, format!("label must be 0 or 1, got {label}")));
                }
                examples.push(Example { features, label: label as u8 });
            }
        }
        FileFormat::Jsonl => {
            let mut want_dim: Option<usize> = None;
            for (idx, line) in text.lines().enumerate() {
                let line_no = idx + 1;
                let line = line.trim_end_matches('\r');
                if line.trim().is_empty() {
                    continue;
                }
                let row: JsonlRow = serde_json::from_str(line)
                    .map_err(|e| parse(line_no, e.to_string()))?;
                if row.label != 0 && row.label != 1 {
                    return Err(parse(line_no, format!("label must be 0 or 1, got {}", row.label)));
                }
                if let Some(pos) = row.features.iter().position(|v| !v.is_finite()) {
                    return Err(parse(line_no, format!("non-finite feature at index {pos}")));
                }
                let want = *want_dim.get_or_insert(row.features.len());
                if row.features.len() != want {
                    return Err(DataError::DimMismatch {
                        path: display.clone(),
                        line: line_no,
                        got: row.features.len(),
                        want,
                    });
                }
                examples.push(Example { features: row.features, label: row.label as u8 });
            }
        }
    }
    if examples.is_empty() {
        return Err(DataError::Empty);
    }
    let provenance = Provenance::File {
        path: display,
        format,
        fnv1a64: content_hash(&raw),
    };
    Dataset::new(examples, provenance, None)
}

/// Write a dataset in a format `load_dataset` reads back bit-identically;
/// floats use the shortest representation that round-trips exactly.
pub fn save_dataset(dataset: &Dataset, path: &Path, format: FileFormat) -> Result<(), DataError> {
    let mut out = String::new();
    match format {
        FileFormat::Csv => {
            let header: Vec<String> = (0..dataset.dim()).map(|i| format!("f{i}")).collect();
            out.push_str(&header.join(","));
            out.push_str(",label\n");
            for e in dataset.examples() {
                let row: Vec<String> = e.features.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&row.join(","));
                out.push_str(&format!(",{}\n", e.label));
            }
        }
        FileFormat::Jsonl => {
            for e in dataset.examples() {
                let row = JsonlRow { features: e.features.clone(), label: e.label as i64 };
                out.push_str(&serde_json::to_string(&row).expect("dataset rows serialize"));
                out.push('\n');
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
