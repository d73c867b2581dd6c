use confens::learners::{majority_vote, weighted_vote};
use confens::tensor::{ClassifierWeights, ConfidenceTensor, StackedPrediction};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (ConfidenceTensor, StackedPrediction)> {
    (2usize..6, 1usize..8).prop_flat_map(|(c, k)| {
        (
            prop::collection::vec(0.0f64..=1.0, k),
            prop::collection::vec(-3.0f64..3.0, c * k * c),
            prop::collection::vec(0..c, k),
        )
            .prop_map(move |(w, theta, votes)| {
                let w = ClassifierWeights::new(w, c).unwrap();
                (
                    ConfidenceTensor::from_parts(w, theta).unwrap(),
                    StackedPrediction::new(c, votes).unwrap(),
                )
            })
    })
}

fn dense_product(theta: &ConfidenceTensor, g: &StackedPrediction) -> Vec<f64> {
    let cols = theta.num_columns();
    let dense = g.dense();
    (0..theta.num_classes())
        .map(|r| (0..cols).map(|l| theta.get(r, l) * dense[l]).sum())
        .collect()
}

fn identity(k: usize, c: usize) -> ConfidenceTensor {
    let mut eye = vec![0.0; c * c];
    for i in 0..c {
        eye[i * c + i] = 1.0;
    }
    ConfidenceTensor::from_slices(ClassifierWeights::uniform(k, c).unwrap(), &vec![eye; k]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sparse_fuse_matches_dense_product((theta, g) in instance()) {
        let sparse = theta.fuse(&g).unwrap();
        for (a, b) in sparse.iter().zip(dense_product(&theta, &g)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn dense_prediction_has_one_hot_per_learner((_theta, g) in instance()) {
        let d = g.dense();
        let c = g.num_classes();
        prop_assert_eq!(d.len(), g.num_learners() * c);
        for (t, block) in d.chunks(c).enumerate() {
            prop_assert_eq!(block.iter().sum::<f64>(), 1.0);
            prop_assert_eq!(block[g.hot_indices()[t]], 1.0);
        }
    }

    #[test]
    fn init_tensor_is_weighted_vote((theta, g) in instance()) {
        let init = ConfidenceTensor::init(theta.weights());
        prop_assert!(init.constraint_residual() == 0.0);
        prop_assert_eq!(init.predict(&g).unwrap(), weighted_vote(&g, theta.weights()).unwrap());
    }

    #[test]
    fn identity_slices_are_majority_vote((theta, g) in instance()) {
        let id = identity(theta.num_learners(), theta.num_classes());
        prop_assert_eq!(id.predict(&g).unwrap(), majority_vote(&g));
    }

    #[test]
    fn slices_refold_to_same_tensor((theta, _g) in instance()) {
        let back = ConfidenceTensor::from_slices(theta.weights().clone(), &theta.slices()).unwrap();
        prop_assert_eq!(back, theta);
    }
}

#[test]
fn exhaustive_two_class_three_learner_patterns() {
    let weights = [[0.9, 0.3, 0.3], [0.5, 0.5, 0.5], [0.0, 1.0, 0.4], [0.6, 0.2, 0.7]];
    let id = identity(3, 2);
    for pattern in 0..8usize {
        let votes: Vec<usize> = (0..3).map(|t| (pattern >> t) & 1).collect();
        let g = StackedPrediction::new(2, votes.clone()).unwrap();
        let ones = votes.iter().sum::<usize>();
        assert_eq!(majority_vote(&g), usize::from(ones >= 2), "pattern {votes:?}");
        assert_eq!(id.predict(&g).unwrap(), majority_vote(&g));
        for w in weights {
            let w = ClassifierWeights::new(w.to_vec(), 2).unwrap();
            assert_eq!(
                ConfidenceTensor::init(&w).predict(&g).unwrap(),
                weighted_vote(&g, &w).unwrap()
            );
        }
    }
}

#[test]
fn tensor_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("theta.json");
    let w = ClassifierWeights::new(vec![0.1 + 0.2, 1.0 / 3.0], 3).unwrap();
    let mut theta = ConfidenceTensor::init(&w);
    theta.set(1, 4, std::f64::consts::PI / 7.0);
    theta.save(&path).unwrap();
    assert_eq!(ConfidenceTensor::load(&path).unwrap(), theta);
}
