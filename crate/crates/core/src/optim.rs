//! Plain gradient descent on the confidence tensor.
//!
//! Training starts from the accuracy-weighted initialization and repeatedly
//! applies `Θ ← Θ − β·∇L` on a batch of samples. Gradient columns sum to zero,
//! so the column sums of `Θ` stay at their initial values without any
//! projection. The only safeguard is step halving: if a step would raise the
//! full-dataset loss, `β` is halved for that step, up to `max_halvings` times.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{self, Batch, LossParams};
use crate::tensor::{ClassifierWeights, ConfidenceTensor, StackedPrediction};

/// How many samples enter each gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    /// Every sample, in order.
    Full,
    /// A uniform draw without replacement of this many samples. `Size(1)` is SGD.
    Size(usize),
}

impl std::fmt::Display for BatchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchSize::Full => f.write_str("full"),
            BatchSize::Size(n) => write!(f, "{n}"),
        }
    }
}

impl std::str::FromStr for BatchSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("full") {
            return Ok(BatchSize::Full);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(BatchSize::Size(n)),
            _ => Err(Error::InvalidParameter(format!(
                "batch size must be `full` or a positive integer, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub batch_size: BatchSize,
    /// Stop when `|L_p − L_{p−1}| / max(|L_{p−1}|, 1)` falls below this.
    pub tolerance: f64,
    pub seed: u64,
    pub max_halvings: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 200,
            batch_size: BatchSize::Full,
            tolerance: 1e-8,
            seed: 0,
            max_halvings: 30,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.batch_size == BatchSize::Size(0) {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Deterministic batch index source.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    num_samples: usize,
    batch_size: BatchSize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(num_samples: usize, batch_size: BatchSize, seed: u64) -> Result<Self> {
        if num_samples == 0 {
            return Err(Error::InvalidData("no samples to draw batches from".into()));
        }
        if let BatchSize::Size(b) = batch_size {
            if b == 0 || b > num_samples {
                return Err(Error::InvalidParameter(format!(
                    "batch size {b} must be between 1 and the sample count {num_samples}"
                )));
            }
        }
        Ok(Self {
            num_samples,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Indices of the next batch; advances the internal stream.
    pub fn select(&mut self) -> Vec<usize> {
        match self.batch_size {
            BatchSize::Full => (0..self.num_samples).collect(),
            BatchSize::Size(b) => rand::seq::index::sample(&mut self.rng, self.num_samples, b).into_vec(),
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_theta: ConfidenceTensor,
    /// Full-dataset loss after each iteration, starting with the initial tensor.
    pub loss_history: Vec<f64>,
    /// `max |Θᵀ1 − w̃|` after each iteration, aligned with `loss_history`.
    pub constraint_residuals: Vec<f64>,
    /// Learning rate actually applied at each iteration after halving (0 for a rejected step).
    pub step_sizes: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

fn apply_step(theta: &ConfidenceTensor, grad: &[f64], learning_rate: f64) -> ConfidenceTensor {
    let mut next = theta.clone();
    for (v, g) in next.as_mut_slice().iter_mut().zip(grad) {
        *v -= learning_rate * g;
    }
    next
}

fn ensure_finite(grad: &[f64], iteration: usize, learning_rate: f64) -> Result<()> {
    match grad.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::Divergence {
            iteration,
            learning_rate,
            detail: format!("gradient entry {i} is not finite"),
        }),
        None => Ok(()),
    }
}

/// One update `Θ − β·∇L(Θ)` on `batch`.
pub fn step(
    theta: &ConfidenceTensor,
    batch: &Batch<'_>,
    params: &LossParams,
    learning_rate: f64,
) -> Result<ConfidenceTensor> {
    let grad = loss::gradient(theta, batch, params)?;
    ensure_finite(&grad, 0, learning_rate)?;
    Ok(apply_step(theta, &grad, learning_rate))
}

/// Train a confidence tensor on stacked predictions with the analytic gradient.
pub fn train(
    predictions: &[StackedPrediction],
    labels: &[usize],
    weights: &ClassifierWeights,
    params: &LossParams,
    config: &OptimizerConfig,
) -> Result<TrainReport> {
    train_with(predictions, labels, weights, params, config, loss::gradient)
}

/// Same as [`train`] with a caller-supplied gradient routine.
pub fn train_with<G>(
    predictions: &[StackedPrediction],
    labels: &[usize],
    weights: &ClassifierWeights,
    params: &LossParams,
    config: &OptimizerConfig,
    mut gradient: G,
) -> Result<TrainReport>
where
    G: FnMut(&ConfidenceTensor, &Batch<'_>, &LossParams) -> Result<Vec<f64>>,
{
    config.validate()?;
    let full = Batch::new(predictions, labels)?;
    if let Some(g) = predictions.first() {
        if g.num_learners() != weights.num_learners() {
            return Err(Error::DimensionMismatch {
                what: "learner count",
                expected: weights.num_learners(),
                actual: g.num_learners(),
            });
        }
    }
    let mut sampler = BatchSampler::new(predictions.len(), config.batch_size, config.seed)?;
    let mut theta = ConfidenceTensor::init(weights);
    let mut current = loss::loss(&theta, &full, params)?;
    if !current.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            learning_rate: config.learning_rate,
            detail: "initial loss is not finite".into(),
        });
    }

    let mut loss_history = vec![current];
    let mut constraint_residuals = vec![theta.constraint_residual()];
    let mut step_sizes = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iters {
        let indices = sampler.select();
        let batch = match config.batch_size {
            BatchSize::Full => full,
            BatchSize::Size(_) => full.subset(&indices)?,
        };
        let grad = gradient(&theta, &batch, params)?;
        ensure_finite(&grad, iteration, config.learning_rate)?;

        let mut lr = config.learning_rate;
        let mut accepted = None;
        let mut any_finite = false;
        for _ in 0..=config.max_halvings {
            let candidate = apply_step(&theta, &grad, lr);
            let trial = loss::loss(&candidate, &full, params)?;
            any_finite |= trial.is_finite();
            if trial.is_finite() && trial <= current {
                accepted = Some((candidate, trial));
                break;
            }
            lr *= 0.5;
        }

        match accepted {
            Some((candidate, trial)) => {
                let change = (trial - current).abs() / current.abs().max(1.0);
                theta = candidate;
                current = trial;
                loss_history.push(current);
                constraint_residuals.push(theta.constraint_residual());
                step_sizes.push(lr);
                if change < config.tolerance {
                    converged = true;
                    break;
                }
            }
            None if !any_finite => {
                return Err(Error::Divergence {
                    iteration,
                    learning_rate: config.learning_rate,
                    detail: "loss is not finite for any halved step".into(),
                });
            }
            None => match config.batch_size {
                // No descent along the full gradient at any tried scale: stationary.
                BatchSize::Full => {
                    converged = true;
                    break;
                }
                BatchSize::Size(_) => {
                    loss_history.push(current);
                    constraint_residuals.push(theta.constraint_residual());
                    step_sizes.push(0.0);
                }
            },
        }
    }

    Ok(TrainReport {
        final_theta: theta,
        iterations_run: loss_history.len() - 1,
        loss_history,
        constraint_residuals,
        step_sizes,
        converged,
    })
}
