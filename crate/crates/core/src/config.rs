//! Run configuration and its flat `key = value` text form.
//!
//! The same keys are accepted from a config file and from command-line flags
//! (`--max-depth 6` sets key `max-depth`). Later assignments override earlier
//! ones, so flags applied after the file win.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::data::{LabelColumn, RING_DEFAULT_NOISE};
use crate::error::{Error, Result};
use crate::optim::{BatchSize, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    DoubleRing,
    Blobs,
    Csv,
    Preds,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::DoubleRing => "double-ring",
            DatasetKind::Blobs => "blobs",
            DatasetKind::Csv => "csv",
            DatasetKind::Preds => "preds",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "double-ring" => Ok(DatasetKind::DoubleRing),
            "blobs" => Ok(DatasetKind::Blobs),
            "csv" => Ok(DatasetKind::Csv),
            "preds" => Ok(DatasetKind::Preds),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset `{other}` (expected double-ring, blobs, csv or preds)"
            ))),
        }
    }
}

/// Margin weight: fixed, or drawn from the standard grid using the run seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaChoice {
    Fixed(f64),
    Random,
}

/// Where the samples come from. Exactly one source per run.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    DoubleRing {
        n: usize,
        noise: f64,
    },
    Blobs {
        n: usize,
        classes: usize,
        dims: usize,
        spread: f64,
    },
    Csv {
        path: PathBuf,
        label: LabelColumn,
        header: bool,
    },
    /// Precomputed votes plus labels; no base learners are fitted.
    Predictions {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<DatasetKind>,
    pub n: usize,
    pub noise: f64,
    pub classes: usize,
    pub dims: usize,
    pub spread: f64,
    pub csv: Option<PathBuf>,
    pub label_col: LabelColumn,
    pub header: bool,
    pub preds: Option<PathBuf>,
    pub k: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub alpha: f64,
    pub gamma: GammaChoice,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Seed for generated datasets; `None` uses `seed`.
    pub data_seed: Option<u64>,
    pub train_fraction: f64,
    pub baselines: Vec<usize>,
    /// Relative tolerance for flagging a learned slice column as uninformative.
    pub slice_tolerance: f64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            n: 1000,
            noise: RING_DEFAULT_NOISE,
            classes: 3,
            dims: 2,
            spread: 1.0,
            csv: None,
            label_col: LabelColumn::Name("label".into()),
            header: true,
            preds: None,
            k: 10,
            max_depth: 6,
            min_leaf: 1,
            alpha: 10.0,
            gamma: GammaChoice::Fixed(5.0),
            optimizer: OptimizerConfig::default(),
            seed: 0,
            data_seed: None,
            train_fraction: 0.8,
            baselines: vec![10, 20, 30, 100],
            slice_tolerance: 1e-9,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidParameter(format!(
            "`{key}`: expected true or false, got `{value}`"
        ))),
    }
}

/// Every key understood by [`RunConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "n",
    "noise",
    "classes",
    "dims",
    "spread",
    "csv",
    "label-col",
    "header",
    "preds",
    "k",
    "max-depth",
    "min-leaf",
    "alpha",
    "gamma",
    "lr",
    "max-iters",
    "batch",
    "tolerance",
    "seed",
    "data-seed",
    "train-fraction",
    "baselines",
    "slice-tolerance",
    "out",
];

impl RunConfig {
    /// Assign one key. Keys use the flag spelling; `_` is accepted for `-`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "dataset" => self.dataset = Some(v.parse()?),
            "n" => self.n = parse(&key, v)?,
            "noise" => self.noise = parse(&key, v)?,
            "classes" => self.classes = parse(&key, v)?,
            "dims" => self.dims = parse(&key, v)?,
            "spread" => self.spread = parse(&key, v)?,
            "csv" => self.csv = Some(PathBuf::from(v)),
            "label-col" => self.label_col = v.parse().expect("infallible"),
            "header" => self.header = parse_bool(&key, v)?,
            "preds" => self.preds = Some(PathBuf::from(v)),
            "k" => self.k = parse(&key, v)?,
            "max-depth" => self.max_depth = parse(&key, v)?,
            "min-leaf" => self.min_leaf = parse(&key, v)?,
            "alpha" => self.alpha = parse(&key, v)?,
            "gamma" => {
                self.gamma = if v.eq_ignore_ascii_case("random") {
                    GammaChoice::Random
                } else {
                    GammaChoice::Fixed(parse(&key, v)?)
                }
            }
            "lr" => self.optimizer.learning_rate = parse(&key, v)?,
            "max-iters" => self.optimizer.max_iters = parse(&key, v)?,
            "batch" => self.optimizer.batch_size = v.parse::<BatchSize>()?,
            "tolerance" => self.optimizer.tolerance = parse(&key, v)?,
            "seed" => self.seed = parse(&key, v)?,
            "data-seed" => self.data_seed = Some(parse(&key, v)?),
            "train-fraction" => self.train_fraction = parse(&key, v)?,
            "baselines" => {
                self.baselines = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',').map(|t| parse(&key, t)).collect::<Result<_>>()?
                }
            }
            "slice-tolerance" => self.slice_tolerance = parse(&key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => return Err(Error::InvalidParameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a flat config text: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("config line {}: expected `key = value`", i + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// The effective dataset kind: explicit, else implied by a given path, else double-ring.
    pub fn dataset_kind(&self) -> Result<DatasetKind> {
        let implied = match (&self.csv, &self.preds) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidParameter(
                    "both `csv` and `preds` are set; choose one dataset source".into(),
                ))
            }
            (Some(_), None) => Some(DatasetKind::Csv),
            (None, Some(_)) => Some(DatasetKind::Preds),
            (None, None) => None,
        };
        match (self.dataset, implied) {
            (Some(d), Some(i)) if d != i => Err(Error::InvalidParameter(format!(
                "dataset `{}` conflicts with a `{}` path",
                d.name(),
                i.name()
            ))),
            (Some(d), _) => Ok(d),
            (None, Some(i)) => Ok(i),
            (None, None) => Ok(DatasetKind::DoubleRing),
        }
    }

    pub fn source(&self) -> Result<DataSource> {
        Ok(match self.dataset_kind()? {
            DatasetKind::DoubleRing => DataSource::DoubleRing {
                n: self.n,
                noise: self.noise,
            },
            DatasetKind::Blobs => DataSource::Blobs {
                n: self.n,
                classes: self.classes,
                dims: self.dims,
                spread: self.spread,
            },
            DatasetKind::Csv => DataSource::Csv {
                path: self
                    .csv
                    .clone()
                    .ok_or_else(|| Error::InvalidParameter("dataset `csv` needs a `csv` path".into()))?,
                label: self.label_col.clone(),
                header: self.header,
            },
            DatasetKind::Preds => DataSource::Predictions {
                path: self
                    .preds
                    .clone()
                    .ok_or_else(|| Error::InvalidParameter("dataset `preds` needs a `preds` path".into()))?,
            },
        })
    }

    pub fn data_seed(&self) -> u64 {
        self.data_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.source()?;
        self.optimizer.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidParameter(
                "max-depth and min-leaf must be at least 1".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if let GammaChoice::Fixed(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidParameter("gamma must be nonnegative".into()));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter("train-fraction must be in (0, 1)".into()));
        }
        if self.baselines.contains(&0) {
            return Err(Error::InvalidParameter(
                "baseline tree counts must be positive".into(),
            ));
        }
        if !(self.slice_tolerance.is_finite() && self.slice_tolerance >= 0.0) {
            return Err(Error::InvalidParameter(
                "slice-tolerance must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Render the run settings in the text format accepted by [`apply_text`](Self::apply_text).
    /// The output directory is left out so saved configs do not depend on where they were written.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = self.dataset_kind().map(DatasetKind::name).unwrap_or("invalid");
        let _ = writeln!(s, "dataset = {kind}");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "noise = {}", self.noise);
        let _ = writeln!(s, "classes = {}", self.classes);
        let _ = writeln!(s, "dims = {}", self.dims);
        let _ = writeln!(s, "spread = {}", self.spread);
        if let Some(p) = &self.csv {
            let _ = writeln!(s, "csv = {}", p.display());
        }
        match &self.label_col {
            LabelColumn::Name(n) => {
                let _ = writeln!(s, "label-col = {n}");
            }
            LabelColumn::Index(i) => {
                let _ = writeln!(s, "label-col = {i}");
            }
        }
        let _ = writeln!(s, "header = {}", self.header);
        if let Some(p) = &self.preds {
            let _ = writeln!(s, "preds = {}", p.display());
        }
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "max-depth = {}", self.max_depth);
        let _ = writeln!(s, "min-leaf = {}", self.min_leaf);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        match self.gamma {
            GammaChoice::Fixed(g) => {
                let _ = writeln!(s, "gamma = {g}");
            }
            GammaChoice::Random => s.push_str("gamma = random\n"),
        }
        let _ = writeln!(s, "lr = {}", self.optimizer.learning_rate);
        let _ = writeln!(s, "max-iters = {}", self.optimizer.max_iters);
        let _ = writeln!(s, "batch = {}", self.optimizer.batch_size);
        let _ = writeln!(s, "tolerance = {}", self.optimizer.tolerance);
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(d) = self.data_seed {
            let _ = writeln!(s, "data-seed = {d}");
        }
        let _ = writeln!(s, "train-fraction = {}", self.train_fraction);
        let baselines: Vec<String> = self.baselines.iter().map(usize::to_string).collect();
        let _ = writeln!(
            s,
            "baselines = {}",
            if baselines.is_empty() {
                "none".to_string()
            } else {
                baselines.join(",")
            }
        );
        let _ = writeln!(s, "slice-tolerance = {}", self.slice_tolerance);
        s
    }
}
