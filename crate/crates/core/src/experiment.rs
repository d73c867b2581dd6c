//! End-to-end runs: data, base learners, tensor training, baselines, reports.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataSource, GammaChoice, RunConfig};
use crate::data::{self, LabeledDataset};
use crate::error::{Error, Result};
use crate::io;
use crate::learners::{fit_bagged, majority_vote, weighted_vote, BagParams, BaggedEnsemble};
use crate::loss::{LossParams, GAMMA_GRID};
use crate::optim::{self, TrainReport};
use crate::seed::derive_seed;
use crate::tensor::{argmax, ClassifierWeights, ConfidenceTensor, StackedPrediction};

const GAMMA_STREAM: u64 = 0x0067_616d_6d61;
const BASELINE_STREAM: u64 = 0x7266_0000;

/// Fraction of samples whose prediction equals the label.
pub fn evaluate<T, F>(samples: &[T], labels: &[usize], mut predict: F) -> Result<f64>
where
    F: FnMut(&T) -> Result<usize>,
{
    if samples.is_empty() {
        return Err(Error::InvalidData("cannot evaluate on an empty set".into()));
    }
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: samples.len(),
            actual: labels.len(),
        });
    }
    let mut hits = 0usize;
    for (x, &y) in samples.iter().zip(labels) {
        if predict(x)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Per-column summary of one learner's slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiagnostics {
    /// The class the learner voted for (the slice column).
    pub class: usize,
    /// Row holding the column's largest entry (lowest row on ties).
    pub argmax_row: usize,
    pub min: f64,
    pub max: f64,
    /// `max − min ≤ tolerance·w_t`: the column barely discriminates between classes.
    pub uninformative: bool,
    /// The column still equals its initial value `w_t·e_class` exactly.
    pub at_init: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceDiagnostics {
    pub learner: usize,
    pub weight: f64,
    pub columns: Vec<ColumnDiagnostics>,
    /// Classes whose column is informative and peaks on its own row.
    pub confident_classes: Vec<usize>,
}

/// Summarize what each learner's slice has learned.
pub fn inspect_slices(theta: &ConfidenceTensor, tolerance: f64) -> Vec<SliceDiagnostics> {
    let c = theta.num_classes();
    let weights = theta.weights().weights();
    (0..theta.num_learners())
        .map(|t| {
            let slice = theta.slice_view(t).expect("learner index in range");
            let w = weights[t];
            let columns: Vec<ColumnDiagnostics> = (0..c)
                .map(|s| {
                    let col: Vec<f64> = (0..c).map(|r| slice[r * c + s]).collect();
                    let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let at_init = col
                        .iter()
                        .enumerate()
                        .all(|(r, &v)| v == if r == s { w } else { 0.0 });
                    ColumnDiagnostics {
                        class: s,
                        argmax_row: argmax(&col).expect("c >= 2"),
                        min,
                        max,
                        uninformative: max - min <= tolerance * w,
                        at_init,
                    }
                })
                .collect();
            let confident_classes = columns
                .iter()
                .filter(|d| !d.uninformative && d.argmax_row == d.class)
                .map(|d| d.class)
                .collect();
            SliceDiagnostics {
                learner: t,
                weight: w,
                columns,
                confident_classes,
            }
        })
        .collect()
}

/// Render slice diagnostics as plain text.
pub fn format_slices(diagnostics: &[SliceDiagnostics]) -> String {
    let mut s = String::new();
    for d in diagnostics {
        let _ = writeln!(s, "learner {} (w = {:.4})", d.learner, d.weight);
        for col in &d.columns {
            let _ = writeln!(
                s,
                "  vote {}: argmax row {}, range [{:.6}, {:.6}]{}{}",
                col.class,
                col.argmax_row,
                col.min,
                col.max,
                if col.uninformative { ", uninformative" } else { "" },
                if col.at_init { ", untouched" } else { "" },
            );
        }
        let classes: Vec<String> = d.confident_classes.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "  confident classes: [{}]", classes.join(", "));
    }
    s
}

/// Convergence trace as CSV: `iteration,loss,constraint_residual,within_reference`.
///
/// `within_reference` marks iterations inside the [`REFERENCE_CONVERGENCE_ITERS`]
/// budget, so the trace can be read against that figure.
pub fn convergence_csv(report: &TrainReport) -> String {
    let mut s = String::from("iteration,loss,constraint_residual,within_reference\n");
    for (i, (l, r)) in report
        .loss_history
        .iter()
        .zip(&report.constraint_residuals)
        .enumerate()
    {
        let _ = writeln!(s, "{i},{l},{r:e},{}", i <= REFERENCE_CONVERGENCE_ITERS);
    }
    s
}

pub fn emit_convergence(report: &TrainReport, path: &Path) -> Result<()> {
    io::write_atomic(path, convergence_csv(report).as_bytes())
}

/// Votes and labels on both sides of the split, plus the learners behind them.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub description: String,
    pub num_classes: usize,
    pub train_predictions: Vec<StackedPrediction>,
    pub train_labels: Vec<usize>,
    pub test_predictions: Vec<StackedPrediction>,
    pub test_labels: Vec<usize>,
    pub weights: ClassifierWeights,
    /// Present when the samples carry features.
    pub split: Option<data::SplitDataset>,
    pub ensemble: Option<BaggedEnsemble>,
}

pub fn load_dataset(source: &DataSource, seed: u64) -> Result<LabeledDataset> {
    match source {
        DataSource::DoubleRing { n, noise } => data::generate_double_ring(*n, *noise, seed),
        DataSource::Blobs {
            n,
            classes,
            dims,
            spread,
        } => data::generate_blobs(*n, *classes, *dims, *spread, seed),
        DataSource::Csv { path, label, header } => data::load_csv(path, label, *header),
        DataSource::Predictions { .. } => Err(Error::InvalidParameter(
            "a prediction file has no features to load as a dataset".into(),
        )),
    }
}

fn describe(source: &DataSource) -> String {
    match source {
        DataSource::DoubleRing { n, noise } => format!("double-ring (n={n}, noise={noise})"),
        DataSource::Blobs {
            n,
            classes,
            dims,
            spread,
        } => format!("blobs (n={n}, classes={classes}, dims={dims}, spread={spread})"),
        DataSource::Csv { path, .. } => format!("csv ({})", path.display()),
        DataSource::Predictions { path } => format!("preds ({})", path.display()),
    }
}

/// Load or generate data, split it, and produce the base learners' votes.
pub fn prepare(config: &RunConfig) -> Result<PreparedData> {
    config.validate()?;
    let source = config.source()?;
    let description = describe(&source);
    if let DataSource::Predictions { path } = &source {
        let (c, k) = data::infer_prediction_shape(path)?;
        let (preds, labels) = data::load_external_predictions(path, c, k)?;
        let (train_idx, test_idx) =
            data::stratified_split_indices(&labels, c, config.train_fraction, config.seed)?;
        let pick = |idx: &[usize]| -> (Vec<StackedPrediction>, Vec<usize>) {
            (
                idx.iter().map(|&i| preds[i].clone()).collect(),
                idx.iter().map(|&i| labels[i]).collect(),
            )
        };
        let (train_predictions, train_labels) = pick(&train_idx);
        let (test_predictions, test_labels) = pick(&test_idx);
        let accuracies = (0..k)
            .map(|t| {
                let hits = train_predictions
                    .iter()
                    .zip(&train_labels)
                    .filter(|(g, &y)| g.hot_indices()[t] == y)
                    .count();
                hits as f64 / train_labels.len() as f64
            })
            .collect();
        return Ok(PreparedData {
            description,
            num_classes: c,
            train_predictions,
            train_labels,
            test_predictions,
            test_labels,
            weights: ClassifierWeights::new(accuracies, c)?,
            split: None,
            ensemble: None,
        });
    }

    let dataset = load_dataset(&source, config.data_seed())?;
    let split = data::split(&dataset, config.train_fraction, config.seed)?;
    let bag = fit_bagged(
        &split.train,
        &BagParams {
            num_trees: config.k,
            max_depth: config.max_depth,
            min_leaf: config.min_leaf,
            bootstrap: true,
        },
        config.seed,
    )?;
    Ok(PreparedData {
        description,
        num_classes: dataset.num_classes(),
        train_predictions: bag.stack_predictions(&split.train)?,
        train_labels: split.train.labels().to_vec(),
        test_predictions: bag.stack_predictions(&split.test)?,
        test_labels: split.test.labels().to_vec(),
        weights: bag.weights().clone(),
        split: Some(split),
        ensemble: Some(bag),
    })
}

/// Resolve `γ`, drawing from the grid with the run seed when random.
pub fn resolve_loss_params(config: &RunConfig) -> Result<LossParams> {
    let gamma = match config.gamma {
        GammaChoice::Fixed(g) => g,
        GammaChoice::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, GAMMA_STREAM));
            *GAMMA_GRID.choose(&mut rng).expect("grid is nonempty")
        }
    };
    LossParams::new(config.alpha, gamma)
}

/// Prepared data plus the trained tensor.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub data: PreparedData,
    pub params: LossParams,
    pub train: TrainReport,
}

pub fn fit(config: &RunConfig) -> Result<FittedModel> {
    let data = prepare(config)?;
    let params = resolve_loss_params(config)?;
    let mut opt = config.optimizer.clone();
    opt.seed = config.seed;
    let train = optim::train(
        &data.train_predictions,
        &data.train_labels,
        &data.weights,
        &params,
        &opt,
    )?;
    Ok(FittedModel { data, params, train })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub all_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub dataset: String,
    pub num_train: usize,
    pub num_test: usize,
    pub num_classes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub rows: Vec<MethodRow>,
    pub weights: Vec<f64>,
    pub slices: Vec<SliceDiagnostics>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub max_constraint_residual: f64,
    /// Baselines skipped because the data has no features to fit trees on.
    pub skipped_baselines: Vec<usize>,
}

/// Iteration count reported for full-batch runs in earlier work; shown beside ours.
pub const REFERENCE_CONVERGENCE_ITERS: usize = 10;

impl ComparisonReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,train_accuracy,test_accuracy,all_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.method, r.train_accuracy, r.test_accuracy, r.all_accuracy
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset: {}", self.dataset);
        let _ = writeln!(
            s,
            "samples: {} train / {} test, {} classes",
            self.num_train, self.num_test, self.num_classes
        );
        let _ = writeln!(s, "loss: alpha = {}, gamma = {}", self.alpha, self.gamma);
        let _ = writeln!(
            s,
            "training: loss {:.6} -> {:.6} in {} iterations (converged: {}, reference: {}), max constraint residual {:.3e}",
            self.initial_loss,
            self.final_loss,
            self.iterations_run,
            self.converged,
            REFERENCE_CONVERGENCE_ITERS,
            self.max_constraint_residual
        );
        if !self.skipped_baselines.is_empty() {
            let skipped: Vec<String> = self.skipped_baselines.iter().map(|m| format!("RF{m}")).collect();
            let _ = writeln!(s, "skipped (no features): {}", skipped.join(", "));
        }
        s.push('\n');
        let _ = writeln!(s, "{:<10} {:>9} {:>9} {:>9}", "method", "train", "test", "all");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:>9.4} {:>9.4} {:>9.4}",
                r.method, r.train_accuracy, r.test_accuracy, r.all_accuracy
            );
        }
        s.push('\n');
        let w: Vec<String> = self.weights.iter().map(|w| format!("{w:.4}")).collect();
        let _ = writeln!(s, "learner weights: [{}]", w.join(", "));
        s.push('\n');
        s.push_str(&format_slices(&self.slices));
        s
    }
}

fn method_row<P>(
    method: String,
    train: &[StackedPrediction],
    train_labels: &[usize],
    test: &[StackedPrediction],
    test_labels: &[usize],
    mut predict: P,
) -> Result<MethodRow>
where
    P: FnMut(&StackedPrediction) -> Result<usize>,
{
    let train_accuracy = evaluate(train, train_labels, &mut predict)?;
    let test_accuracy = evaluate(test, test_labels, &mut predict)?;
    let n_train = train.len() as f64;
    let n_test = test.len() as f64;
    Ok(MethodRow {
        method,
        train_accuracy,
        test_accuracy,
        all_accuracy: (n_train * train_accuracy + n_test * test_accuracy) / (n_train + n_test),
    })
}

/// Everything a `compare` run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ComparisonReport,
    pub model: FittedModel,
}

/// Seed for the independently fitted forest with `num_trees` trees.
pub fn baseline_seed(seed: u64, num_trees: usize) -> u64 {
    derive_seed(seed, BASELINE_STREAM + num_trees as u64)
}

/// Fit, evaluate the tensor against voting baselines and forests, and write
/// artifacts when `config.out` is set.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    let model = fit(config)?;
    let d = &model.data;
    let k = d.weights.num_learners();
    let theta = &model.train.final_theta;
    let (tr, trl, te, tel) = (
        &d.train_predictions,
        &d.train_labels,
        &d.test_predictions,
        &d.test_labels,
    );

    let mut rows = vec![
        method_row(format!("OUR{k}"), tr, trl, te, tel, |g| theta.predict(g))?,
        method_row(format!("WV{k}"), tr, trl, te, tel, |g| {
            weighted_vote(g, &d.weights)
        })?,
        method_row(format!("MV{k}"), tr, trl, te, tel, |g| Ok(majority_vote(g)))?,
    ];
    let mut skipped = Vec::new();
    for &m in &config.baselines {
        let Some(split) = &d.split else {
            skipped.push(m);
            continue;
        };
        let forest = fit_bagged(
            &split.train,
            &BagParams {
                num_trees: m,
                max_depth: config.max_depth,
                min_leaf: config.min_leaf,
                bootstrap: true,
            },
            baseline_seed(config.seed, m),
        )?;
        let ftr = forest.stack_predictions(&split.train)?;
        let fte = forest.stack_predictions(&split.test)?;
        rows.push(method_row(format!("RF{m}"), &ftr, trl, &fte, tel, |g| {
            Ok(majority_vote(g))
        })?);
    }

    let report = ComparisonReport {
        dataset: d.description.clone(),
        num_train: tr.len(),
        num_test: te.len(),
        num_classes: d.num_classes,
        alpha: model.params.alpha(),
        gamma: model.params.gamma(),
        rows,
        weights: d.weights.weights().to_vec(),
        slices: inspect_slices(theta, config.slice_tolerance),
        initial_loss: model.train.loss_history[0],
        final_loss: *model.train.loss_history.last().expect("history is nonempty"),
        iterations_run: model.train.iterations_run,
        converged: model.train.converged,
        max_constraint_residual: model
            .train
            .constraint_residuals
            .iter()
            .copied()
            .fold(0.0, f64::max),
        skipped_baselines: skipped,
    };

    if let Some(out) = &config.out {
        write_artifacts(out, config, &report, &model)?;
    }
    Ok(ExperimentOutcome { report, model })
}

/// Write the model files shared by `train` and `compare`.
pub fn write_model_artifacts(out: &Path, config: &RunConfig, model: &FittedModel) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    io::write_atomic(&out.join("config.txt"), config.to_text().as_bytes())?;
    model.train.final_theta.save(&out.join("tensor.json"))?;
    if let Some(bag) = &model.data.ensemble {
        bag.save(&out.join("ensemble.json"))?;
    }
    emit_convergence(&model.train, &out.join("convergence.csv"))
}

fn write_artifacts(
    out: &Path,
    config: &RunConfig,
    report: &ComparisonReport,
    model: &FittedModel,
) -> Result<()> {
    write_model_artifacts(out, config, model)?;
    io::write_atomic(&out.join("report.txt"), report.to_text().as_bytes())?;
    io::write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_basics() {
        let xs = [0usize, 1, 0, 1];
        let ys = [0usize, 1, 0, 1];
        assert_eq!(evaluate(&xs, &ys, |&x| Ok(x)).unwrap(), 1.0);
        assert_eq!(evaluate(&xs, &ys, |_| Ok(0)).unwrap(), 0.5);
        assert!(evaluate::<usize, _>(&[], &[], |_| Ok(0)).is_err());
    }

    #[test]
    fn evaluate_matches_confusion_trace() {
        // Hand-counted 3-class confusion matrix (rows = truth, cols = prediction):
        // [[3,1,0],[0,2,1],[1,0,2]] -> trace 7 of 10.
        let truth = [0, 0, 0, 0, 1, 1, 1, 2, 2, 2];
        let pred = [0, 0, 0, 1, 1, 1, 2, 0, 2, 2];
        let idx: Vec<usize> = (0..10).collect();
        let acc = evaluate(&idx, &truth, |&i| Ok(pred[i])).unwrap();
        assert_eq!(acc, 0.7);
    }

    #[test]
    fn init_tensor_slices_are_confident() {
        let w = ClassifierWeights::new(vec![0.8, 0.0, 0.6], 3).unwrap();
        let theta = ConfidenceTensor::init(&w);
        let diag = inspect_slices(&theta, 1e-9);
        for d in [&diag[0], &diag[2]] {
            assert_eq!(d.confident_classes, vec![0, 1, 2]);
            for col in &d.columns {
                assert_eq!(col.argmax_row, col.class);
                assert!(!col.uninformative && col.at_init);
            }
        }
        // zero weight: all-zero slice carries no information
        assert!(diag[1].columns.iter().all(|c| c.uninformative));
        assert!(diag[1].confident_classes.is_empty());
    }

    #[test]
    fn constant_column_flagged() {
        let w = ClassifierWeights::new(vec![0.9, 0.6], 3).unwrap();
        let mut theta = ConfidenceTensor::init(&w);
        for r in 0..3 {
            theta.set(r, 2, 0.3);
        }
        let diag = inspect_slices(&theta, 1e-9);
        assert!(diag[0].columns[2].uninformative);
        assert!(!diag[0].columns[2].at_init);
        assert_eq!(diag[0].confident_classes, vec![0, 1]);
        assert!(
            format_slices(&diag).contains("vote 2: argmax row 0, range [0.300000, 0.300000], uninformative")
        );
    }

    #[test]
    fn convergence_csv_layout() {
        let w = ClassifierWeights::new(vec![1.0], 2).unwrap();
        let report = TrainReport {
            final_theta: ConfidenceTensor::init(&w),
            loss_history: vec![2.0, 1.5, 1.25],
            constraint_residuals: vec![0.0, 0.0, 1e-17],
            step_sizes: vec![0.1, 0.1],
            iterations_run: 2,
            converged: false,
        };
        let csv = convergence_csv(&report);
        assert_eq!(
            csv,
            "iteration,loss,constraint_residual,within_reference\n0,2,0e0,true\n1,1.5,0e0,true\n2,1.25,1e-17,true\n"
        );
    }

    #[test]
    fn random_gamma_from_grid() {
        let c = RunConfig {
            gamma: GammaChoice::Random,
            ..Default::default()
        };
        let p = resolve_loss_params(&c).unwrap();
        assert!(GAMMA_GRID.contains(&p.gamma()));
        assert_eq!(p, resolve_loss_params(&c).unwrap());
    }
}
