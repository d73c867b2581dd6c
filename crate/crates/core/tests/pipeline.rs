use std::collections::HashSet;

use confens::config::{DatasetKind, RunConfig};
use confens::data::{
    generate_blobs, generate_double_ring, infer_prediction_shape, load_csv, load_external_predictions,
    save_csv, split, stratified_split_indices, write_external_predictions, LabelColumn,
};
use confens::experiment::{self, inspect_slices, run_experiment};
use confens::learners::{fit_bagged, BagParams};
use confens::tensor::{ClassifierWeights, StackedPrediction};
use confens::ErrorKind;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stratified_split_partitions_and_covers_classes(
        labels in prop::collection::vec(0usize..4, 8..120),
        fraction in 0.5f64..0.95,
        seed in any::<u64>(),
    ) {
        let mut counts = [0usize; 4];
        for &y in &labels {
            counts[y] += 1;
        }
        prop_assume!(counts.iter().all(|&n| n != 1));
        let (train, test) = stratified_split_indices(&labels, 4, fraction, seed).unwrap();
        let all: HashSet<usize> = train.iter().chain(&test).copied().collect();
        prop_assert_eq!(all.len(), labels.len());
        prop_assert_eq!(train.len() + test.len(), labels.len());
        prop_assert!(train.windows(2).all(|w| w[0] < w[1]));
        for (class, &count) in counts.iter().enumerate() {
            if count > 0 {
                prop_assert!(test.iter().any(|&i| labels[i] == class));
                prop_assert!(train.iter().any(|&i| labels[i] == class));
            }
        }
    }
}

#[test]
fn csv_round_trip_with_named_label() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("blobs.csv");
    let data = generate_blobs(60, 3, 4, 1.0, 5).unwrap();
    save_csv(&data, &path).unwrap();
    let back = load_csv(&path, &LabelColumn::Name("label".into()), true).unwrap();
    assert_eq!(back.features(), data.features());
    assert_eq!(back.len(), data.len());
    // Labels are renumbered by first appearance; the partition must be identical.
    for i in 0..data.len() {
        for j in 0..data.len() {
            assert_eq!(
                data.labels()[i] == data.labels()[j],
                back.labels()[i] == back.labels()[j]
            );
        }
    }
}

#[test]
fn prediction_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.txt");
    let data = generate_double_ring(200, 0.3, 1).unwrap();
    let bag = fit_bagged(
        &data,
        &BagParams {
            num_trees: 6,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    let votes = bag.stack_predictions(&data).unwrap();
    write_external_predictions(&path, &votes, data.labels()).unwrap();
    assert_eq!(infer_prediction_shape(&path).unwrap(), (2, 6));
    let (back, labels) = load_external_predictions(&path, 2, 6).unwrap();
    assert_eq!(back, votes);
    assert_eq!(labels, data.labels());
}

#[test]
fn prediction_file_accepts_commas_comments_and_blank_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    std::fs::write(&path, "# votes then label\n0,1,2\n\n2 2 1\n  1,1 , 0\n").unwrap();
    assert_eq!(infer_prediction_shape(&path).unwrap(), (3, 2));
    let (preds, labels) = load_external_predictions(&path, 3, 2).unwrap();
    assert_eq!(labels, vec![2, 1, 0]);
    assert_eq!(preds[1].hot_indices(), &[2, 2]);

    std::fs::write(&path, "0 1 1\n0 1\n").unwrap();
    let err = load_external_predictions(&path, 2, 2).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn columns_never_voted_stay_at_initial_value() {
    // Learner 0 never votes for class 2, so its column for vote 2 receives no gradient.
    let preds: Vec<StackedPrediction> = (0..60)
        .map(|i| StackedPrediction::new(3, vec![i % 2, i % 3]).unwrap())
        .collect();
    let labels: Vec<usize> = (0..60).map(|i| (i + i / 7) % 3).collect();
    let w = ClassifierWeights::new(vec![0.7, 0.5], 3).unwrap();
    let report =
        confens::optim::train(&preds, &labels, &w, &Default::default(), &Default::default()).unwrap();
    let diag = inspect_slices(&report.final_theta, 1e-9);
    assert!(diag[0].columns[2].at_init);
    assert!(!diag[0].columns[2].uninformative);
    assert!(!diag[0].columns[0].at_init);
    assert!(diag[1].columns.iter().all(|c| !c.at_init));
}

fn ring_config(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        dataset: Some(DatasetKind::DoubleRing),
        n: 300,
        noise: 0.3,
        seed,
        baselines: vec![10, 20],
        ..Default::default()
    };
    c.optimizer.max_iters = 40;
    c
}

#[test]
fn report_rows_and_all_data_accuracy() {
    let outcome = run_experiment(&ring_config(3)).unwrap();
    let r = &outcome.report;
    let names: Vec<&str> = r.rows.iter().map(|row| row.method.as_str()).collect();
    assert_eq!(names, ["OUR10", "WV10", "MV10", "RF10", "RF20"]);
    let n = (r.num_train + r.num_test) as f64;
    for row in &r.rows {
        let expected = (r.num_train as f64 * row.train_accuracy + r.num_test as f64 * row.test_accuracy) / n;
        assert!((row.all_accuracy - expected).abs() <= 1e-12);
    }
    assert_eq!(r.num_train + r.num_test, 300);
    assert!(r.max_constraint_residual <= 1e-6);
    assert!(r
        .to_csv()
        .starts_with("method,train_accuracy,test_accuracy,all_accuracy\n"));
    assert!(r.to_text().contains("OUR10"));
}

#[test]
fn weighted_vote_row_matches_init_tensor() {
    let config = ring_config(4);
    let outcome = run_experiment(&config).unwrap();
    let d = experiment::prepare(&config).unwrap();
    let init = confens::tensor::ConfidenceTensor::init(&d.weights);
    let acc = experiment::evaluate(&d.test_predictions, &d.test_labels, |g| init.predict(g)).unwrap();
    assert_eq!(outcome.report.row("WV10").unwrap().test_accuracy, acc);
}

#[test]
fn prediction_source_runs_without_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.txt");
    let data = generate_blobs(150, 3, 2, 1.5, 2).unwrap();
    let parts = split(&data, 0.5, 2).unwrap();
    let bag = fit_bagged(
        &parts.train,
        &BagParams {
            num_trees: 5,
            ..Default::default()
        },
        2,
    )
    .unwrap();
    write_external_predictions(&path, &bag.stack_predictions(&data).unwrap(), data.labels()).unwrap();

    let mut config = RunConfig {
        preds: Some(path),
        ..Default::default()
    };
    config.optimizer.max_iters = 30;
    let outcome = run_experiment(&config).unwrap();
    assert_eq!(outcome.report.skipped_baselines, vec![10, 20, 30, 100]);
    assert_eq!(outcome.report.rows.len(), 3);
    assert_eq!(outcome.report.row("OUR5").unwrap().method, "OUR5");
}

#[test]
fn artifacts_are_written_and_reloadable() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ring_config(5);
    config.out = Some(dir.path().to_path_buf());
    let outcome = run_experiment(&config).unwrap();
    for f in [
        "config.txt",
        "tensor.json",
        "ensemble.json",
        "convergence.csv",
        "report.txt",
        "report.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let theta = confens::tensor::ConfidenceTensor::load(&dir.path().join("tensor.json")).unwrap();
    assert_eq!(theta, outcome.model.train.final_theta);
    let saved = std::fs::read_to_string(dir.path().join("config.txt")).unwrap();
    let reread = RunConfig::from_text(&saved).unwrap();
    assert_eq!(reread.to_text(), saved);
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), outcome.model.train.loss_history.len() + 1);
    assert_eq!(csv, experiment::convergence_csv(&outcome.model.train));
}

#[test]
fn gamma_random_is_reproducible_and_from_grid() {
    let mut config = ring_config(6);
    config.set("gamma", "random").unwrap();
    let a = experiment::resolve_loss_params(&config).unwrap();
    let b = experiment::resolve_loss_params(&config).unwrap();
    assert_eq!(a, b);
    assert!(confens::loss::GAMMA_GRID.contains(&a.gamma()));
}
