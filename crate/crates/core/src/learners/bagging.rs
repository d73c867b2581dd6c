use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_on, DecisionTree, TreeParams};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::io;
use crate::seed::derive_seed;
use crate::tensor::{ClassifierWeights, StackedPrediction};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BagParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Draw a bootstrap resample per tree. Off only for testing.
    pub bootstrap: bool,
}

impl Default for BagParams {
    fn default() -> Self {
        Self {
            num_trees: 10,
            max_depth: 6,
            min_leaf: 1,
            bootstrap: true,
        }
    }
}

/// Number of features tried at each node: `⌈√d⌉`.
pub fn sqrt_features(num_features: usize) -> usize {
    ((num_features as f64).sqrt().ceil() as usize).max(1)
}

/// `k` trees fitted on bootstrap resamples, with their training accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct BaggedEnsemble {
    trees: Vec<DecisionTree>,
    bootstrap_seed: u64,
    weights: ClassifierWeights,
}

/// Seed of tree `t`'s random stream.
pub fn tree_seed(seed: u64, t: usize) -> u64 {
    derive_seed(seed, t as u64)
}

/// Fit `params.num_trees` trees. Tree `t` draws its bootstrap sample and its
/// per-node feature subsets from a stream seeded by `(seed, t)`, so the result
/// does not depend on fitting order.
pub fn fit_bagged(data: &LabeledDataset, params: &BagParams, seed: u64) -> Result<BaggedEnsemble> {
    if params.num_trees == 0 {
        return Err(Error::InvalidParameter(
            "an ensemble needs at least one tree".into(),
        ));
    }
    let n = data.len();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        max_features: Some(sqrt_features(data.num_features())),
    };
    let trees = (0..params.num_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let indices = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree_on(data, indices, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let accuracies = trees
        .iter()
        .map(|tree| {
            let hits = data
                .rows()
                .zip(data.labels())
                .filter(|(row, &y)| tree.predict(row) == y)
                .count();
            hits as f64 / n as f64
        })
        .collect();
    Ok(BaggedEnsemble {
        trees,
        bootstrap_seed: seed,
        weights: ClassifierWeights::new(accuracies, data.num_classes())?,
    })
}

impl BaggedEnsemble {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.bootstrap_seed
    }

    /// Training-set accuracy of each tree.
    pub fn weights(&self) -> &ClassifierWeights {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.num_classes()
    }

    pub fn num_features(&self) -> usize {
        self.trees[0].num_features()
    }

    /// Every tree's vote on every sample.
    pub fn stack_predictions(&self, data: &LabeledDataset) -> Result<Vec<StackedPrediction>> {
        if data.num_features() != self.num_features() {
            return Err(Error::DimensionMismatch {
                what: "feature count",
                expected: self.num_features(),
                actual: data.num_features(),
            });
        }
        data.rows()
            .map(|row| {
                let votes = self.trees.iter().map(|t| t.predict(row)).collect();
                StackedPrediction::new(self.num_classes(), votes)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EnsembleDoc {
            format_version: ENSEMBLE_FORMAT_VERSION,
            seed: self.bootstrap_seed,
            num_classes: self.num_classes(),
            weights: self.weights.weights().to_vec(),
            trees: self.trees.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnsembleDoc = serde_json::from_str(text)?;
        if doc.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::InvalidData(format!(
                "unsupported ensemble format version {}",
                doc.format_version
            )));
        }
        if doc.trees.is_empty() || doc.trees.len() != doc.weights.len() {
            return Err(Error::InvalidData("ensemble trees and weights disagree".into()));
        }
        let d = doc.trees[0].num_features();
        for tree in &doc.trees {
            tree.validate()?;
            if tree.num_classes() != doc.num_classes || tree.num_features() != d {
                return Err(Error::InvalidData("trees disagree on shape".into()));
            }
        }
        Ok(Self {
            weights: ClassifierWeights::new(doc.weights, doc.num_classes)?,
            trees: doc.trees,
            bootstrap_seed: doc.seed,
        })
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
struct EnsembleDoc {
    format_version: u32,
    seed: u64,
    num_classes: usize,
    weights: Vec<f64>,
    trees: Vec<DecisionTree>,
}
