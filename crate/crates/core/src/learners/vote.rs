//! Fixed-confidence voting rules.

use crate::error::{Error, Result};
use crate::tensor::{argmax, ClassifierWeights, StackedPrediction};

/// Class with the most votes; ties go to the lowest class index.
pub fn majority_vote(g: &StackedPrediction) -> usize {
    let mut counts = vec![0.0; g.num_classes()];
    for &h in g.hot_indices() {
        counts[h] += 1.0;
    }
    argmax(&counts).expect("at least two classes")
}

/// Class with the largest summed learner weight; ties go to the lowest index.
pub fn weighted_vote(g: &StackedPrediction, weights: &ClassifierWeights) -> Result<usize> {
    if weights.num_learners() != g.num_learners() {
        return Err(Error::DimensionMismatch {
            what: "learner count",
            expected: g.num_learners(),
            actual: weights.num_learners(),
        });
    }
    let mut scores = vec![0.0; g.num_classes()];
    for (&h, &w) in g.hot_indices().iter().zip(weights.weights()) {
        scores[h] += w;
    }
    Ok(argmax(&scores).expect("at least two classes"))
}
