//! The confidence tensor and the objects it acts on.
//!
//! A fitted ensemble of `k` base classifiers over `c` classes is fused through
//! a `c × c × k` tensor. Slice `t` is a `c × c` matrix whose entry `(r, s)` is
//! the confidence placed on class `r` when classifier `t` votes for class `s`.
//! The tensor is stored unfolded: the `k` slices sit side by side in a dense,
//! row-major `c × (k·c)` matrix, slice `t` occupying columns `t·c .. (t+1)·c`.
//!
//! A sample's votes are a [`StackedPrediction`]: the concatenation of the `k`
//! one-hot vote vectors. Multiplying the unfolded tensor by that vector picks
//! one column per slice and adds them, which is how [`ConfidenceTensor::fuse`]
//! computes it.
//!
//! Every column of slice `t` is constrained to sum to `w[t]`, the accuracy of
//! classifier `t`. [`ConfidenceTensor::init`] builds `w[t]·I` slices, which
//! satisfy the constraint exactly and reproduce accuracy-weighted voting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Index of the largest entry, ties resolved to the lowest index.
///
/// Returns `None` for an empty slice. NaN entries are never selected unless
/// every entry is NaN, in which case index 0 is returned.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            None => best = Some((i, v)),
            Some((_, b)) if v > b || (b.is_nan() && !v.is_nan()) => best = Some((i, v)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// Repeat each learner weight `num_classes` times: `(w1,..,w1, w2,..,w2, ...)`.
pub fn expand_weights(weights: &[f64], num_classes: usize) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one learner weight is required".into(),
        ));
    }
    if num_classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "num_classes must be at least 2, got {num_classes}"
        )));
    }
    Ok(weights
        .iter()
        .flat_map(|&w| std::iter::repeat_n(w, num_classes))
        .collect())
}

/// Per-learner accuracy weights `w` together with their expansion `w̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWeights {
    weights: Vec<f64>,
    expanded: Vec<f64>,
    num_classes: usize,
}

impl ClassifierWeights {
    /// Every weight must lie in `[0, 1]`.
    pub fn new(weights: Vec<f64>, num_classes: usize) -> Result<Self> {
        if let Some((t, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(0.0..=1.0).contains(*w))
        {
            return Err(Error::InvalidParameter(format!(
                "learner weight {t} is {w}, expected a value in [0, 1]"
            )));
        }
        let expanded = expand_weights(&weights, num_classes)?;
        Ok(Self {
            weights,
            expanded,
            num_classes,
        })
    }

    /// All-ones weights, which turn the initial tensor into plain majority voting.
    pub fn uniform(num_learners: usize, num_classes: usize) -> Result<Self> {
        Self::new(vec![1.0; num_learners], num_classes)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expanded(&self) -> &[f64] {
        &self.expanded
    }

    pub fn num_learners(&self) -> usize {
        self.weights.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// The votes of `k` classifiers on a single sample.
///
/// Densely this is a `k·c` vector with exactly one `1` per `c`-block; only the
/// hot positions are stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StackedPrediction {
    num_classes: usize,
    hot: Vec<usize>,
}

impl StackedPrediction {
    pub fn new(num_classes: usize, hot_indices: Vec<usize>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidParameter(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if hot_indices.is_empty() {
            return Err(Error::InvalidParameter(
                "a stacked prediction needs at least one learner".into(),
            ));
        }
        if let Some(&bad) = hot_indices.iter().find(|&&h| h >= num_classes) {
            return Err(Error::IndexOutOfRange {
                what: "class",
                index: bad,
                limit: num_classes,
            });
        }
        Ok(Self {
            num_classes,
            hot: hot_indices,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_learners(&self) -> usize {
        self.hot.len()
    }

    /// Class voted by each learner.
    pub fn hot_indices(&self) -> &[usize] {
        &self.hot
    }

    /// Flat positions of the ones in the dense `k·c` vector, in learner order.
    pub fn active_columns(&self) -> impl Iterator<Item = usize> + '_ {
        let c = self.num_classes;
        self.hot.iter().enumerate().map(move |(t, &h)| t * c + h)
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.num_classes * self.hot.len()];
        for l in self.active_columns() {
            g[l] = 1.0;
        }
        g
    }
}

/// The unfolded `c × (k·c)` confidence tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTensor {
    num_classes: usize,
    num_learners: usize,
    weights: ClassifierWeights,
    theta: Vec<f64>,
}

impl ConfidenceTensor {
    /// Slice `t` is `w[t]` times the identity.
    pub fn init(weights: &ClassifierWeights) -> Self {
        let c = weights.num_classes();
        let k = weights.num_learners();
        let cols = k * c;
        let mut theta = vec![0.0; c * cols];
        for (t, &w) in weights.weights().iter().enumerate() {
            for r in 0..c {
                theta[r * cols + t * c + r] = w;
            }
        }
        Self {
            num_classes: c,
            num_learners: k,
            weights: weights.clone(),
            theta,
        }
    }

    /// Build from a row-major `c × (k·c)` buffer. Entries must be finite.
    ///
    /// The column-sum constraint is not enforced here; callers that load a
    /// tensor can inspect [`constraint_residual`](Self::constraint_residual).
    pub fn from_parts(weights: ClassifierWeights, theta: Vec<f64>) -> Result<Self> {
        let c = weights.num_classes();
        let k = weights.num_learners();
        if theta.len() != c * k * c {
            return Err(Error::DimensionMismatch {
                what: "theta length",
                expected: c * k * c,
                actual: theta.len(),
            });
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("theta entry {i} is not finite")));
        }
        Ok(Self {
            num_classes: c,
            num_learners: k,
            weights,
            theta,
        })
    }

    /// Refold from `k` row-major `c × c` slices.
    pub fn from_slices(weights: ClassifierWeights, slices: &[Vec<f64>]) -> Result<Self> {
        let c = weights.num_classes();
        let k = weights.num_learners();
        if slices.len() != k {
            return Err(Error::DimensionMismatch {
                what: "slice count",
                expected: k,
                actual: slices.len(),
            });
        }
        let cols = k * c;
        let mut theta = vec![0.0; c * cols];
        for (t, slice) in slices.iter().enumerate() {
            if slice.len() != c * c {
                return Err(Error::DimensionMismatch {
                    what: "slice length",
                    expected: c * c,
                    actual: slice.len(),
                });
            }
            for r in 0..c {
                theta[r * cols + t * c..r * cols + (t + 1) * c].copy_from_slice(&slice[r * c..(r + 1) * c]);
            }
        }
        Self::from_parts(weights, theta)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_learners(&self) -> usize {
        self.num_learners
    }

    /// Number of columns, `k·c`.
    pub fn num_columns(&self) -> usize {
        self.num_learners * self.num_classes
    }

    pub fn weights(&self) -> &ClassifierWeights {
        &self.weights
    }

    /// Row-major `c × (k·c)` entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.theta[row * self.num_columns() + col]
    }

    /// Overwrite a single entry. Used for manual edits and diagnostics; this
    /// can break the column-sum constraint.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let cols = self.num_columns();
        self.theta[row * cols + col] = value;
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let cols = self.num_columns();
        let mut sums = vec![0.0; cols];
        for row in self.theta.chunks_exact(cols) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// `max_l |Σ_r Θ[r, l] − w̃[l]|`.
    pub fn constraint_residual(&self) -> f64 {
        self.column_sums()
            .iter()
            .zip(self.weights.expanded())
            .map(|(s, w)| (s - w).abs())
            .fold(0.0, f64::max)
    }

    fn check_prediction(&self, g: &StackedPrediction) -> Result<()> {
        if g.num_classes() != self.num_classes {
            return Err(Error::DimensionMismatch {
                what: "prediction classes",
                expected: self.num_classes,
                actual: g.num_classes(),
            });
        }
        if g.num_learners() != self.num_learners {
            return Err(Error::DimensionMismatch {
                what: "prediction learners",
                expected: self.num_learners,
                actual: g.num_learners(),
            });
        }
        Ok(())
    }

    /// `Θ·g`, summing the one selected column of every slice.
    pub fn fuse(&self, g: &StackedPrediction) -> Result<Vec<f64>> {
        self.check_prediction(g)?;
        let mut out = vec![0.0; self.num_classes];
        self.fuse_into(g, &mut out);
        Ok(out)
    }

    /// Unchecked fusion into a caller buffer of length `c`.
    pub(crate) fn fuse_into(&self, g: &StackedPrediction, out: &mut [f64]) {
        let cols = self.num_columns();
        out.fill(0.0);
        for l in g.active_columns() {
            for (r, o) in out.iter_mut().enumerate() {
                *o += self.theta[r * cols + l];
            }
        }
    }

    /// Predicted class: argmax of `Θ·g` (softmax does not change the order).
    pub fn predict(&self, g: &StackedPrediction) -> Result<usize> {
        let fused = self.fuse(g)?;
        Ok(argmax(&fused).expect("num_classes >= 2"))
    }

    /// Slice `t` as a row-major `c × c` matrix.
    pub fn slice_view(&self, t: usize) -> Result<Vec<f64>> {
        if t >= self.num_learners {
            return Err(Error::IndexOutOfRange {
                what: "learner",
                index: t,
                limit: self.num_learners,
            });
        }
        let c = self.num_classes;
        let cols = self.num_columns();
        let mut out = Vec::with_capacity(c * c);
        for r in 0..c {
            out.extend_from_slice(&self.theta[r * cols + t * c..r * cols + (t + 1) * c]);
        }
        Ok(out)
    }

    pub fn slices(&self) -> Vec<Vec<f64>> {
        (0..self.num_learners)
            .map(|t| self.slice_view(t).expect("index in range"))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TensorDoc {
            c: self.num_classes,
            k: self.num_learners,
            w: self.weights.weights().to_vec(),
            theta: self.theta.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TensorDoc = serde_json::from_str(text)?;
        if doc.w.len() != doc.k {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: doc.k,
                actual: doc.w.len(),
            });
        }
        let weights = ClassifierWeights::new(doc.w, doc.c)?;
        Self::from_parts(weights, doc.theta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct TensorDoc {
    c: usize,
    k: usize,
    w: Vec<f64>,
    theta: Vec<f64>,
}
