//! Base classifiers and the fixed voting rules they are compared against.

mod bagging;
mod tree;
mod vote;

pub use bagging::{fit_bagged, sqrt_features, tree_seed, BagParams, BaggedEnsemble, ENSEMBLE_FORMAT_VERSION};
pub use tree::{fit_tree, DecisionTree, Node, TreeParams};
pub use vote::{majority_vote, weighted_vote};
