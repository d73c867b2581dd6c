//! Margin-augmented cross-entropy over fused ensemble outputs.
//!
//! For a sample with votes `g` and true class `m`, let `s = softmax(Θ·g)`.
//! The per-sample loss is
//!
//! ```text
//! ℓ(s) = −ln s[m] − γ·s[m] + γ·lse_α(s − s[m]·e_m)
//! ```
//!
//! where `lse_α(v) = (1/α)·ln Σ_j exp(α·v_j)` is a smooth stand-in for `max`.
//! Zeroing the true-class entry before taking the smooth max makes the last
//! two terms a smoothed negative margin: the gap between the true-class
//! probability and the largest competing probability. The zeroed entry still
//! contributes `exp(0) = 1` to the sum. With `γ = 0` the loss is plain
//! cross-entropy.
//!
//! The loss of a batch is the sum of per-sample losses, and the gradient is
//! the matching sum. Each sample touches only the `k` columns of `Θ` selected
//! by its votes, and every column of the gradient sums to zero, so a gradient
//! step never moves the column sums of `Θ`.

use crate::error::{Error, Result};
use crate::tensor::{ConfidenceTensor, StackedPrediction};

/// Margin weights drawn from when `γ` is chosen at random.
pub const GAMMA_GRID: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 25.0];

/// Sharpness `α` of the smooth max and weight `γ` of the margin term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    alpha: f64,
    gamma: f64,
}

impl LossParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        Ok(Self { alpha, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            gamma: 5.0,
        }
    }
}

/// A set of samples (votes plus true labels) over which loss and gradient are summed.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    predictions: &'a [StackedPrediction],
    labels: &'a [usize],
    subset: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn new(predictions: &'a [StackedPrediction], labels: &'a [usize]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::InvalidData("batch is empty".into()));
        }
        if predictions.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label count",
                expected: predictions.len(),
                actual: labels.len(),
            });
        }
        Ok(Self {
            predictions,
            labels,
            subset: None,
        })
    }

    /// Restrict to the given sample indices of the full set.
    pub fn subset(&self, indices: &'a [usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidData("batch is empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.predictions.len()) {
            return Err(Error::IndexOutOfRange {
                what: "sample",
                index: bad,
                limit: self.predictions.len(),
            });
        }
        Ok(Self {
            subset: Some(indices),
            ..*self
        })
    }

    pub fn len(&self) -> usize {
        self.subset.map_or(self.predictions.len(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples in batch order.
    pub fn iter(&self) -> impl Iterator<Item = (&'a StackedPrediction, usize)> + '_ {
        let preds = self.predictions;
        let labels = self.labels;
        let n = self.len();
        (0..n).map(move |i| {
            let idx = self.subset.map_or(i, |s| s[i]);
            (&preds[idx], labels[idx])
        })
    }

    fn validate(&self, theta: &ConfidenceTensor) -> Result<()> {
        let c = theta.num_classes();
        let k = theta.num_learners();
        for (g, label) in self.iter() {
            if g.num_classes() != c {
                return Err(Error::DimensionMismatch {
                    what: "prediction classes",
                    expected: c,
                    actual: g.num_classes(),
                });
            }
            if g.num_learners() != k {
                return Err(Error::DimensionMismatch {
                    what: "prediction learners",
                    expected: k,
                    actual: g.num_learners(),
                });
            }
            if label >= c {
                return Err(Error::IndexOutOfRange {
                    what: "label",
                    index: label,
                    limit: c,
                });
            }
        }
        Ok(())
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidParameter("empty vector".into()));
    }
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::InvalidData(format!("entry {i} is not finite"))),
        None => Ok(()),
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn softmax_into(v: &[f64], out: &mut [f64]) {
    let mx = max_of(v);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - mx).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn lse_unchecked(v: &[f64], alpha: f64) -> f64 {
    let mx = max_of(v);
    let sum: f64 = v.iter().map(|&x| (alpha * (x - mx)).exp()).sum();
    mx + sum.ln() / alpha
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    check_finite(v)?;
    let mut out = vec![0.0; v.len()];
    softmax_into(v, &mut out);
    Ok(out)
}

/// `(1/α)·ln Σ_j exp(α·v_j)`, evaluated with a max shift.
///
/// Lies in `[max(v), max(v) + ln(len)/α]`.
pub fn logsumexp(v: &[f64], alpha: f64) -> Result<f64> {
    check_finite(v)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(lse_unchecked(v, alpha))
}

/// Smoothed margin of a probability vector at `label`.
pub fn margin_from_probs(s: &[f64], label: usize, alpha: f64) -> f64 {
    let mut masked = s.to_vec();
    masked[label] = 0.0;
    s[label] - lse_unchecked(&masked, alpha)
}

/// Per-sample loss written directly as a function of the probability vector.
pub fn sample_loss_from_probs(s: &[f64], label: usize, params: &LossParams) -> f64 {
    -s[label].ln() - params.gamma * margin_from_probs(s, label, params.alpha)
}

/// Smoothed margin of one sample under `Θ`.
pub fn sample_margin(
    theta: &ConfidenceTensor,
    g: &StackedPrediction,
    label: usize,
    alpha: f64,
) -> Result<f64> {
    if label >= theta.num_classes() {
        return Err(Error::IndexOutOfRange {
            what: "label",
            index: label,
            limit: theta.num_classes(),
        });
    }
    let s = softmax(&theta.fuse(g)?)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    Ok(margin_from_probs(&s, label, alpha))
}

/// Summed loss over the batch.
pub fn loss(theta: &ConfidenceTensor, batch: &Batch<'_>, params: &LossParams) -> Result<f64> {
    batch.validate(theta)?;
    let c = theta.num_classes();
    let mut z = vec![0.0; c];
    let mut s = vec![0.0; c];
    let mut total = 0.0;
    for (g, m) in batch.iter() {
        theta.fuse_into(g, &mut z);
        softmax_into(&z, &mut s);
        // −ln s[m] from the logits, so it stays finite when s[m] underflows.
        let nll = lse_unchecked(&z, 1.0) - z[m];
        let sm = s[m];
        s[m] = 0.0;
        let smooth_max = lse_unchecked(&s, params.alpha);
        total += nll - params.gamma * sm + params.gamma * smooth_max;
    }
    Ok(total)
}

/// `∂L/∂Θ` as a row-major `c × (k·c)` matrix.
///
/// With `z = Θ·g` and `s = softmax(z)`, the derivative with respect to the
/// logits is
///
/// ```text
/// ∂ℓ/∂z_r = (s_r − δ_mr) − γ·s_m·(δ_mr − s_r) + γ·Σ_{j≠m} p_j·s_j·(δ_jr − s_r)
/// ```
///
/// with `p_j = exp(α·s_j) / (Σ_{j≠m} exp(α·s_j) + 1)`. Since `∂z_r/∂Θ[r, l] = g_l`,
/// that vector is added to each of the `k` columns the sample votes for.
pub fn gradient(theta: &ConfidenceTensor, batch: &Batch<'_>, params: &LossParams) -> Result<Vec<f64>> {
    batch.validate(theta)?;
    let c = theta.num_classes();
    let cols = theta.num_columns();
    let mut grad = vec![0.0; c * cols];
    let mut z = vec![0.0; c];
    let mut s = vec![0.0; c];
    let mut p = vec![0.0; c];
    let mut dz = vec![0.0; c];
    for (g, m) in batch.iter() {
        theta.fuse_into(g, &mut z);
        softmax_into(&z, &mut s);
        logit_gradient(&s, m, params, &mut p, &mut dz);
        for l in g.active_columns() {
            for (r, d) in dz.iter().enumerate() {
                grad[r * cols + l] += d;
            }
        }
    }
    Ok(grad)
}

fn logit_gradient(s: &[f64], m: usize, params: &LossParams, p: &mut [f64], dz: &mut [f64]) {
    let LossParams { alpha, gamma } = *params;
    // Weights of the smooth max over the masked vector; entry m holds exp(0).
    p.copy_from_slice(s);
    p[m] = 0.0;
    softmax_scaled_in_place(p, alpha);
    let weighted: f64 = (0..s.len()).filter(|&j| j != m).map(|j| p[j] * s[j]).sum();
    let sm = s[m];
    for r in 0..s.len() {
        let on_label = if r == m { 1.0 } else { 0.0 };
        let cross_entropy = s[r] - on_label;
        let linear_margin = -gamma * sm * (on_label - s[r]);
        let smooth_max = if r == m {
            -gamma * s[r] * weighted
        } else {
            gamma * (p[r] * s[r] - s[r] * weighted)
        };
        dz[r] = cross_entropy + linear_margin + smooth_max;
    }
}

fn softmax_scaled_in_place(v: &mut [f64], alpha: f64) {
    let mx = max_of(v);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (alpha * (*x - mx)).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Central finite differences of [`loss`] with respect to every entry of `Θ`.
///
/// Costs two loss evaluations per entry; meant for checking [`gradient`].
pub fn fd_gradient(
    theta: &ConfidenceTensor,
    batch: &Batch<'_>,
    params: &LossParams,
    step: f64,
) -> Result<Vec<f64>> {
    if !(1e-8..=1e-2).contains(&step) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be in [1e-8, 1e-2], got {step}"
        )));
    }
    batch.validate(theta)?;
    let mut probe = theta.clone();
    let mut out = vec![0.0; theta.as_slice().len()];
    for (i, o) in out.iter_mut().enumerate() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let plus = loss(&probe, batch, params)?;
        probe.as_mut_slice()[i] = orig - step;
        let minus = loss(&probe, batch, params)?;
        probe.as_mut_slice()[i] = orig;
        *o = (plus - minus) / (2.0 * step);
    }
    Ok(out)
}

/// Slack allowed in each midpoint-convexity comparison.
pub const CONVEXITY_SLACK: f64 = 1e-10;

fn check_probability(s: &[f64], what: &str) -> Result<()> {
    let sum: f64 = s.iter().sum();
    if s.iter().any(|&x| !x.is_finite() || x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{what} is not a probability vector"
        )));
    }
    Ok(())
}

/// Check midpoint convexity of `f` at `num_points` evenly spaced points of the
/// segment from `s0` to `s1`, one comparison per consecutive triple.
pub fn midpoint_convex_along<F>(f: F, s0: &[f64], s1: &[f64], num_points: usize) -> bool
where
    F: Fn(&[f64]) -> f64,
{
    let last = (num_points - 1) as f64;
    let values: Vec<f64> = (0..num_points)
        .map(|i| {
            let lambda = i as f64 / last;
            let s: Vec<f64> = s0
                .iter()
                .zip(s1)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect();
            f(&s)
        })
        .collect();
    values
        .windows(3)
        .all(|w| w[1] <= 0.5 * (w[0] + w[2]) + CONVEXITY_SLACK)
}

/// Probe convexity of the per-sample loss in the probability vector along a segment.
pub fn convexity_probe(
    s0: &[f64],
    s1: &[f64],
    label: usize,
    params: &LossParams,
    num_points: usize,
) -> Result<bool> {
    check_probability(s0, "s0")?;
    check_probability(s1, "s1")?;
    if s0.len() != s1.len() {
        return Err(Error::DimensionMismatch {
            what: "probability vector length",
            expected: s0.len(),
            actual: s1.len(),
        });
    }
    if label >= s0.len() {
        return Err(Error::IndexOutOfRange {
            what: "label",
            index: label,
            limit: s0.len(),
        });
    }
    if num_points < 3 {
        return Err(Error::InvalidParameter(format!(
            "convexity probe needs at least 3 points, got {num_points}"
        )));
    }
    Ok(midpoint_convex_along(
        |s| sample_loss_from_probs(s, label, params),
        s0,
        s1,
        num_points,
    ))
}
