//! CART classification trees with Gini impurity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum samples on each side of a split. Nodes smaller than twice this are leaves.
    pub min_leaf: usize,
    /// Features drawn per node; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 6,
            min_leaf: 1,
            max_features: None,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidParameter("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    max_depth: usize,
    num_classes: usize,
    num_features: usize,
}

impl DecisionTree {
    /// Node 0 is the root.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Class for one feature row. The row length is not checked.
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Structural check used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidData("tree has no nodes".into()));
        }
        for node in &self.nodes {
            match *node {
                Node::Leaf { class } if class >= self.num_classes => {
                    return Err(Error::InvalidData(format!("leaf class {class} out of range")))
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= self.num_features || !threshold.is_finite() {
                        return Err(Error::InvalidData("malformed split node".into()));
                    }
                    if left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(Error::InvalidData("split child index out of range".into()));
                    }
                }
                _ => {}
            }
        }
        if self.depth() > self.max_depth {
            return Err(Error::InvalidData("tree deeper than its max_depth".into()));
        }
        Ok(())
    }
}

/// Fit a tree on every sample of `data`.
pub fn fit_tree<R: Rng>(data: &LabeledDataset, params: &TreeParams, rng: &mut R) -> Result<DecisionTree> {
    let indices: Vec<usize> = (0..data.len()).collect();
    fit_tree_on(data, indices, params, rng)
}

/// Fit a tree on the rows listed in `indices` (repeats allowed, as in a bootstrap).
pub(crate) fn fit_tree_on<R: Rng>(
    data: &LabeledDataset,
    indices: Vec<usize>,
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree> {
    params.validate()?;
    if indices.is_empty() || data.is_empty() {
        return Err(Error::InvalidData("cannot fit a tree on no samples".into()));
    }
    if data.num_features() == 0 {
        return Err(Error::InvalidData("cannot fit a tree without features".into()));
    }
    let mut builder = Builder {
        data,
        params,
        rng,
        nodes: Vec::new(),
    };
    builder.build(indices, 0);
    Ok(DecisionTree {
        nodes: builder.nodes,
        max_depth: params.max_depth,
        num_classes: data.num_classes(),
        num_features: data.num_features(),
    })
}

struct Builder<'a, R> {
    data: &'a LabeledDataset,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, indices: Vec<usize>, depth: usize) -> usize {
        let labels = self.data.labels();
        let mut counts = vec![0usize; self.data.num_classes()];
        for &i in &indices {
            counts[labels[i]] += 1;
        }
        let majority = argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>()).unwrap_or(0);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority });
        if depth >= self.params.max_depth || pure || indices.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&indices, &counts) else {
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.data.row(i)[best.feature] <= best.threshold);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.data.num_features();
        match self.params.max_features {
            Some(m) if m < d => {
                let mut f = rand::seq::index::sample(self.rng, d, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    /// Split maximizing `Σ_side Σ_class count² / side_size`, which is the same
    /// as minimizing the size-weighted Gini impurity. Earlier features and
    /// smaller thresholds win ties.
    fn best_split(&mut self, indices: &[usize], totals: &[usize]) -> Option<Candidate> {
        let labels = self.data.labels();
        let n = indices.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        let mut order = indices.to_vec();
        for feature in self.candidate_features() {
            let value = |i: usize| self.data.row(i)[feature];
            order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
            let mut left = vec![0usize; totals.len()];
            for pos in 1..n {
                left[labels[order[pos - 1]]] += 1;
                let (lo, hi) = (value(order[pos - 1]), value(order[pos]));
                if lo >= hi || pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                let n_left = pos as f64;
                let n_right = (n - pos) as f64;
                let mut sq_left = 0.0;
                let mut sq_right = 0.0;
                for (l, t) in left.iter().zip(totals) {
                    sq_left += (*l as f64).powi(2);
                    sq_right += ((t - l) as f64).powi(2);
                }
                let score = sq_left / n_left + sq_right / n_right;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(Candidate {
                        feature,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn separable_stump() {
        let ds =
            LabeledDataset::new(vec![0.1, 0.4, 0.5, 2.0, 2.5, 3.0], 1, vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let params = TreeParams {
            max_depth: 1,
            ..Default::default()
        };
        let tree = fit_tree(&ds, &params, &mut rng()).unwrap();
        assert_eq!(tree.nodes().len(), 3);
        match tree.nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 1.25),
            _ => panic!("expected a split"),
        }
        for (row, &y) in ds.rows().zip(ds.labels()) {
            assert_eq!(tree.predict(row), y);
        }
    }

    #[test]
    fn pure_node_is_leaf() {
        let ds = LabeledDataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![1, 1, 1, 0], 2).unwrap();
        let sub = ds.subset(&[0, 1, 2]);
        // a single-class subset is not a valid dataset, so fit on repeated indices instead
        assert!(sub.is_err());
        let tree = fit_tree_on(&ds, vec![0, 1, 2], &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(tree.nodes(), &[Node::Leaf { class: 1 }]);
    }

    #[test]
    fn leaf_tie_goes_to_lowest_class() {
        // identical features: no split possible
        let ds = LabeledDataset::new(vec![1.0, 1.0], 1, vec![1, 0], 2).unwrap();
        let tree = fit_tree(&ds, &TreeParams::default(), &mut rng()).unwrap();
        assert_eq!(tree.nodes(), &[Node::Leaf { class: 0 }]);
    }

    #[test]
    fn min_leaf_blocks_small_nodes() {
        let ds = LabeledDataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 1, 0, 1], 2).unwrap();
        let params = TreeParams {
            max_depth: 5,
            min_leaf: 3,
            max_features: None,
        };
        let tree = fit_tree(&ds, &params, &mut rng()).unwrap();
        assert_eq!(tree.nodes().len(), 1);
    }

    #[test]
    fn invalid_params() {
        let ds = LabeledDataset::new(vec![0.0, 1.0], 1, vec![0, 1], 2).unwrap();
        let bad = TreeParams {
            max_depth: 0,
            ..Default::default()
        };
        assert!(fit_tree(&ds, &bad, &mut rng()).is_err());
        assert!(fit_tree_on(&ds, vec![], &TreeParams::default(), &mut rng()).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let ds = LabeledDataset::new(vec![0.0, 1.0, 2.0, 3.0], 1, vec![0, 0, 1, 1], 2).unwrap();
        let tree = fit_tree(&ds, &TreeParams::default(), &mut rng()).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: DecisionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
        back.validate().unwrap();
    }
}
