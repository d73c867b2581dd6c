use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use confens::config::{DataSource, RunConfig};
use confens::experiment::{self, format_slices, inspect_slices};
use confens::tensor::ConfidenceTensor;
use confens::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "confens",
    version,
    about = "Fuse classifier votes through a learned confidence tensor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit base learners and the tensor; write model files to --out.
    Train(RunArgs),
    /// Train, then compare against voting and random-forest baselines.
    Compare(RunArgs),
    /// Describe what each learner's slice of a saved tensor has learned.
    Inspect(InspectArgs),
    /// Write a generated dataset as CSV to --out.
    GenData(RunArgs),
    /// Train and print the per-iteration loss and constraint residual as CSV.
    Convergence(RunArgs),
}

/// Run settings. Every flag maps to the config key of the same name; flags
/// override values read from --config.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// double-ring, blobs, csv or preds.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    csv: Option<String>,
    /// Label column: header name, or zero-based index.
    #[arg(long)]
    label_col: Option<String>,
    /// Whether the CSV has a header row (true/false).
    #[arg(long)]
    header: Option<String>,
    /// External predictions: k class indices then the label, per line.
    #[arg(long)]
    preds: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    spread: Option<String>,
    /// Number of base trees.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    max_depth: Option<String>,
    #[arg(long)]
    min_leaf: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// A number, or `random` to draw from 5, 10, 15, 20, 25.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    /// `full` or a batch size.
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Seed for generated data; defaults to --seed.
    #[arg(long)]
    data_seed: Option<String>,
    #[arg(long)]
    train_fraction: Option<String>,
    /// Comma-separated forest sizes, or `none`.
    #[arg(long)]
    baselines: Option<String>,
    #[arg(long)]
    slice_tolerance: Option<String>,
    /// Output directory (a file path for gen-data).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct InspectArgs {
    /// Saved tensor JSON.
    #[arg(long)]
    tensor: PathBuf,
    /// Columns whose range is within this fraction of the learner weight are flagged.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

impl RunArgs {
    fn resolve(&self) -> confens::Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            config.apply_text(&text)?;
        }
        let flags = [
            ("dataset", &self.dataset),
            ("csv", &self.csv),
            ("label-col", &self.label_col),
            ("header", &self.header),
            ("preds", &self.preds),
            ("n", &self.n),
            ("noise", &self.noise),
            ("classes", &self.classes),
            ("dims", &self.dims),
            ("spread", &self.spread),
            ("k", &self.k),
            ("max-depth", &self.max_depth),
            ("min-leaf", &self.min_leaf),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
            ("lr", &self.lr),
            ("max-iters", &self.max_iters),
            ("batch", &self.batch),
            ("tolerance", &self.tolerance),
            ("seed", &self.seed),
            ("data-seed", &self.data_seed),
            ("train-fraction", &self.train_fraction),
            ("baselines", &self.baselines),
            ("slice-tolerance", &self.slice_tolerance),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.set(key, v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }
}

fn train(args: &RunArgs) -> confens::Result<()> {
    let config = args.resolve()?;
    let model = experiment::fit(&config)?;
    let t = &model.train;
    println!(
        "{}: loss {:.6} -> {:.6} in {} iterations (converged: {})",
        model.data.description,
        t.loss_history[0],
        t.loss_history.last().expect("history is nonempty"),
        t.iterations_run,
        t.converged
    );
    match &config.out {
        Some(out) => {
            experiment::write_model_artifacts(out, &config, &model)?;
            println!("wrote model files to {}", out.display());
        }
        None => eprintln!("no --out given; nothing written"),
    }
    Ok(())
}

fn compare(args: &RunArgs) -> confens::Result<()> {
    let outcome = experiment::run_experiment(&args.resolve()?)?;
    print!("{}", outcome.report.to_text());
    Ok(())
}

fn inspect(args: &InspectArgs) -> confens::Result<()> {
    let theta = ConfidenceTensor::load(&args.tensor)?;
    println!(
        "{} learners, {} classes, constraint residual {:.3e}",
        theta.num_learners(),
        theta.num_classes(),
        theta.constraint_residual()
    );
    print!("{}", format_slices(&inspect_slices(&theta, args.tolerance)));
    Ok(())
}

fn gen_data(args: &RunArgs) -> confens::Result<()> {
    let config = args.resolve()?;
    let source = config.source()?;
    if !matches!(source, DataSource::DoubleRing { .. } | DataSource::Blobs { .. }) {
        return Err(Error::InvalidParameter(
            "gen-data needs --dataset double-ring or blobs".into(),
        ));
    }
    let out = config
        .out
        .clone()
        .ok_or_else(|| Error::InvalidParameter("gen-data needs --out FILE".into()))?;
    let data = experiment::load_dataset(&source, config.data_seed())?;
    confens::data::save_csv(&data, &out)?;
    println!("wrote {} samples to {}", data.len(), out.display());
    Ok(())
}

fn convergence(args: &RunArgs) -> confens::Result<()> {
    let config = args.resolve()?;
    let model = experiment::fit(&config)?;
    match &config.out {
        Some(out) => {
            std::fs::create_dir_all(out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let path = out.join("convergence.csv");
            experiment::emit_convergence(&model.train, &path)?;
            println!("wrote {}", path.display());
        }
        None => print!("{}", experiment::convergence_csv(&model.train)),
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Io => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Inspect(a) => inspect(a),
        Command::GenData(a) => gen_data(a),
        Command::Convergence(a) => convergence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
