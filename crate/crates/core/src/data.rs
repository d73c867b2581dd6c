//! Datasets: construction, synthetic generators, file formats and splitting.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io;
use crate::tensor::StackedPrediction;

pub const RING_INNER_RADIUS: f64 = 1.0;
pub const RING_OUTER_RADIUS: f64 = 2.0;
pub const RING_DEFAULT_NOISE: f64 = 0.15;
/// Radius of the circle the blob centers are placed on.
pub const BLOB_CENTER_RADIUS: f64 = 4.0;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Numeric feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
    num_classes: usize,
    feature_names: Option<Vec<String>>,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    /// `features` is row-major `n × num_features`.
    ///
    /// Every class in `0..num_classes` must occur at least once and all
    /// features must be finite.
    pub fn new(
        features: Vec<f64>,
        num_features: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if num_classes < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if n < num_classes {
            return Err(Error::InvalidData(format!(
                "{n} samples cannot cover {num_classes} classes"
            )));
        }
        if features.len() != n * num_features {
            return Err(Error::DimensionMismatch {
                what: "feature buffer length",
                expected: n * num_features,
                actual: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "feature value in row {} is not finite",
                i / num_features.max(1)
            )));
        }
        let mut seen = vec![false; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: y,
                    limit: num_classes,
                });
            }
            seen[y] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidData(format!("class {missing} has no samples")));
        }
        Ok(Self {
            features,
            num_features,
            labels,
            num_classes,
            feature_names: None,
            class_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features {
            return Err(Error::DimensionMismatch {
                what: "feature name count",
                expected: self.num_features,
                actual: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::DimensionMismatch {
                what: "class name count",
                expected: self.num_classes,
                actual: names.len(),
            });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features
            .chunks_exact(self.num_features.max(1))
            .take(self.len())
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Original label values, indexed by class, when loaded from a file.
    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    /// Samples at `indices`, in that order. Names carry over.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange {
                    what: "sample",
                    index: i,
                    limit: self.len(),
                });
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let mut out = Self::new(features, self.num_features, labels, self.num_classes)?;
        out.feature_names = self.feature_names.clone();
        out.class_names = self.class_names.clone();
        Ok(out)
    }

    /// Count of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Two concentric noisy rings in the plane.
///
/// Class 0 is the inner ring (radius 1) with `⌊n/2⌋` points, class 1 the outer
/// ring (radius 2) with `⌈n/2⌉` points. Angles are uniform; radii carry
/// Gaussian noise with standard deviation `noise`.
pub fn generate_double_ring(n: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "double ring needs at least 4 points, got {n}"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise must be nonnegative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = n / 2;
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (class, base) = if i < inner {
            (0, RING_INNER_RADIUS)
        } else {
            (1, RING_OUTER_RADIUS)
        };
        let angle = rng.random::<f64>() * 2.0 * PI;
        let z: f64 = rng.sample(StandardNormal);
        let radius = base + noise * z;
        features.push(radius * angle.cos());
        features.push(radius * angle.sin());
        labels.push(class);
    }
    LabeledDataset::new(features, 2, labels, 2)?.with_feature_names(vec!["x".into(), "y".into()])
}

/// Isotropic Gaussian clusters.
///
/// Class `j`'s center sits at angle `2πj/c` on a circle of radius 4 in the
/// first two coordinates (zero elsewhere); sample `i` belongs to class `i mod c`.
pub fn generate_blobs(
    n: usize,
    num_classes: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes < 2 {
        return Err(Error::InvalidParameter("blobs need at least 2 classes".into()));
    }
    if dims < 2 {
        return Err(Error::InvalidParameter("blobs need at least 2 dimensions".into()));
    }
    if n < num_classes {
        return Err(Error::InvalidParameter(format!(
            "{n} points cannot cover {num_classes} classes"
        )));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "spread must be nonnegative, got {spread}"
        )));
    }
    let centers = blob_centers(num_classes, dims);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * dims);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % num_classes;
        for &c in &centers[class] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(c + spread * z);
        }
        labels.push(class);
    }
    let names = (0..dims).map(|j| format!("x{j}")).collect();
    LabeledDataset::new(features, dims, labels, num_classes)?.with_feature_names(names)
}

/// Centers used by [`generate_blobs`].
pub fn blob_centers(num_classes: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / num_classes as f64;
            let mut c = vec![0.0; dims];
            c[0] = BLOB_CENTER_RADIUS * a.cos();
            c[1] = BLOB_CENTER_RADIUS * a.sin();
            c
        })
        .collect()
}

/// Which CSV column holds the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// A bare nonnegative integer selects by position; anything else by name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        })
    }
}

/// Load a numeric CSV with one label column.
///
/// Label values are mapped to classes in order of first appearance; the
/// original values are kept as class names.
pub fn load_csv(path: &Path, label: &LabelColumn, header: bool) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut records = reader.records();
    let mut header_row: Option<Vec<String>> = None;
    if header {
        match records.next() {
            Some(r) => {
                let r = r.map_err(|e| csv_error(path, e))?;
                header_row = Some(r.iter().map(str::to_string).collect());
            }
            None => return Err(Error::InvalidData(format!("{}: file is empty", path.display()))),
        }
    }

    let label_idx = match (label, &header_row) {
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(cols)) => cols
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidData(format!("label column `{name}` not found in header")))?,
        (LabelColumn::Name(name), None) => {
            return Err(Error::InvalidParameter(format!(
                "label column `{name}` selected by name but the file has no header"
            )))
        }
    };

    let mut width = header_row.as_ref().map(Vec::len);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if label_idx >= w {
            return Err(Error::InvalidData(format!(
                "label column {label_idx} out of range for {w} columns"
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                let class = match class_names.iter().position(|c| c == cell) {
                    Some(c) => c,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(class);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("column {j}: `{cell}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        path: path.into(),
                        line,
                        message: format!("column {j}: `{cell}` is not finite"),
                    });
                }
                features.push(v);
            }
        }
    }

    let width = width.ok_or_else(|| Error::InvalidData(format!("{}: no data rows", path.display())))?;
    if labels.is_empty() {
        return Err(Error::InvalidData(format!("{}: no data rows", path.display())));
    }
    if class_names.len() < 2 {
        return Err(Error::InvalidData(format!(
            "{}: label column has a single class",
            path.display()
        )));
    }
    let num_classes = class_names.len();
    let mut ds =
        LabeledDataset::new(features, width - 1, labels, num_classes)?.with_class_names(class_names)?;
    if let Some(mut cols) = header_row {
        cols.remove(label_idx);
        ds = ds.with_feature_names(cols)?;
    }
    Ok(ds)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Write a dataset as CSV with a header; the label is the last column.
///
/// Floats use the shortest representation that parses back to the same value.
pub fn save_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let names: Vec<String> = match dataset.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..dataset.num_features()).map(|j| format!("x{j}")).collect(),
    };
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push("label");
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, row) in dataset.rows().enumerate() {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let y = dataset.labels()[i];
        match dataset.class_names() {
            Some(names) => out.push_str(&names[y]),
            None => {
                let _ = write!(out, "{y}");
            }
        }
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

fn prediction_rows(path: &Path) -> Result<Vec<(usize, Vec<usize>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    message: format!("`{t}` is not a class index"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((i + 1, values));
    }
    if rows.is_empty() {
        return Err(Error::InvalidData(format!(
            "{}: no prediction rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Infer `(num_classes, num_learners)` from a prediction file: the learner
/// count from the row width, the class count from the largest index seen.
pub fn infer_prediction_shape(path: &Path) -> Result<(usize, usize)> {
    let rows = prediction_rows(path)?;
    let width = rows[0].1.len();
    if width < 2 {
        return Err(Error::Parse {
            path: path.into(),
            line: rows[0].0,
            message: "a row needs at least one prediction and a label".into(),
        });
    }
    let max_index = rows
        .iter()
        .flat_map(|(_, r)| r.iter().copied())
        .max()
        .unwrap_or(0);
    Ok(((max_index + 1).max(2), width - 1))
}

/// Read externally produced votes: one sample per line, `k` predicted class
/// indices followed by the true label, separated by commas or whitespace.
/// Blank lines and lines starting with `#` are skipped.
pub fn load_external_predictions(
    path: &Path,
    num_classes: usize,
    num_learners: usize,
) -> Result<(Vec<StackedPrediction>, Vec<usize>)> {
    if num_classes < 2 || num_learners == 0 {
        return Err(Error::InvalidParameter(format!(
            "invalid prediction shape: {num_classes} classes, {num_learners} learners"
        )));
    }
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (line, mut values) in prediction_rows(path)? {
        if values.len() != num_learners + 1 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {} fields, found {}", num_learners + 1, values.len()),
            });
        }
        if let Some(&bad) = values.iter().find(|&&v| v >= num_classes) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("class index {bad} out of range for {num_classes} classes"),
            });
        }
        let label = values.pop().expect("nonempty row");
        preds.push(StackedPrediction::new(num_classes, values)?);
        labels.push(label);
    }
    Ok((preds, labels))
}

/// Inverse of [`load_external_predictions`], space-separated.
pub fn write_external_predictions(
    path: &Path,
    predictions: &[StackedPrediction],
    labels: &[usize],
) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: predictions.len(),
            actual: labels.len(),
        });
    }
    let mut out = String::new();
    for (g, y) in predictions.iter().zip(labels) {
        for h in g.hot_indices() {
            let _ = write!(out, "{h} ");
        }
        let _ = writeln!(out, "{y}");
    }
    io::write_atomic(path, out.as_bytes())
}

/// A train/test partition of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Source indices of the training rows, ascending.
    pub train_indices: Vec<usize>,
    /// Source indices of the test rows, ascending.
    pub test_indices: Vec<usize>,
    pub split_seed: u64,
}

/// Stratified train/test indices over `labels`.
///
/// Each class with `n_c` samples sends `max(1, ⌊n_c·(1 − fraction)⌋)` of them
/// to the test side and the rest to training, so every class appears on both
/// sides. Returned index lists are sorted.
pub fn stratified_split_indices(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::IndexOutOfRange {
                what: "label",
                index: y,
                limit: num_classes,
            });
        }
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() == 1 {
            return Err(Error::InvalidData(format!(
                "class {class} has a single sample and cannot be stratified; merge or drop it"
            )));
        }
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        // Small epsilon so that e.g. 10·0.2 is not floored to 1.
        let n_test = ((members.len() as f64 * (1.0 - train_fraction) + 1e-9).floor() as usize).max(1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified split of a dataset; see [`stratified_split_indices`].
pub fn split(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<SplitDataset> {
    let (train_indices, test_indices) =
        stratified_split_indices(dataset.labels(), dataset.num_classes(), train_fraction, seed)?;
    Ok(SplitDataset {
        train: dataset.subset(&train_indices)?,
        test: dataset.subset(&test_indices)?,
        train_indices,
        test_indices,
        split_seed: seed,
    })
}
