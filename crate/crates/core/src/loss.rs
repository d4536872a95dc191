//! Cross-entropy and the numerical-difference (ND) counting loss.
//!
//! ND scales the cross-entropy of a count prediction by `1 + d`, where
//! `d = alpha * |y_pr - y_gt|^gamma` grows with how far the predicted count
//! is from the truth. `d` is a per-sample constant: no gradient flows
//! through the argmax that produced `y_pr`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_COUNT_VOCAB: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariant {
    /// Counts come from a dedicated estimator reading `<num>` placeholders.
    #[default]
    Separated,
    /// The decoder emits count tokens inline.
    Shared,
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separated" => Ok(LossVariant::Separated),
            "shared" => Ok(LossVariant::Shared),
            _ => Err(Error::invalid("loss.variant", format!("expected separated or shared, got {s:?}"))),
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Separated => "separated",
            LossVariant::Shared => "shared",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NDLossConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Count classes encode the values `0..count_vocab`.
    pub count_vocab: usize,
    pub variant: LossVariant,
}

impl Default for NDLossConfig {
    fn default() -> Self {
        NDLossConfig {
            alpha: 1.0,
            gamma: 1.0,
            count_vocab: DEFAULT_COUNT_VOCAB,
            variant: LossVariant::Separated,
        }
    }
}

impl NDLossConfig {
    /// Plain cross-entropy expressed as an ND config.
    pub fn ce_only(&self) -> Self {
        NDLossConfig { alpha: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        check_factors(self.alpha, self.gamma)?;
        if self.count_vocab < 2 {
            return Err(Error::invalid("loss.count_vocab", "must be at least 2"));
        }
        Ok(())
    }
}

fn check_factors(alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid("alpha", format!("must be finite and non-negative, got {alpha}")));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::invalid("gamma", format!("must be finite and non-negative, got {gamma}")));
    }
    Ok(())
}

/// `-sum(y_i * ln(max(p_i, 1e-12)))`.
pub fn cross_entropy(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: p.len() });
    }
    Ok(-p
        .iter()
        .zip(y)
        .filter(|(_, &yi)| yi != 0.0)
        .map(|(&pi, &yi)| yi * pi.max(PROB_FLOOR).ln())
        .sum::<f64>())
}

/// Cross-entropy against a class index.
pub fn cross_entropy_index(p: &[f64], target: usize) -> Result<f64> {
    let pt = p.get(target).ok_or(Error::DimensionMismatch { expected: target + 1, got: p.len() })?;
    Ok(-pt.max(PROB_FLOOR).ln())
}

/// `alpha * |y_pr - y_gt|^gamma`, with `gamma = 0` meaning `alpha * [y_pr != y_gt]`.
pub fn nd_penalty(y_pr: u64, y_gt: u64, alpha: f64, gamma: f64) -> Result<f64> {
    check_factors(alpha, gamma)?;
    Ok(penalty_unchecked(y_pr.abs_diff(y_gt) as f64, alpha, gamma))
}

fn penalty_unchecked(diff: f64, alpha: f64, gamma: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else if gamma == 0.0 {
        alpha
    } else {
        alpha * diff.powf(gamma)
    }
}

/// `(1 + d) * CE(p, y)`.
pub fn nd_loss(p: &[f64], y: &[f64], y_pr: u64, y_gt: u64, cfg: &NDLossConfig) -> Result<f64> {
    let d = nd_penalty(y_pr, y_gt, cfg.alpha, cfg.gamma)?;
    Ok((1.0 + d) * cross_entropy(p, y)?)
}

/// Gradient of [`nd_loss`] with respect to `p`, `d` held fixed.
pub fn nd_loss_grad(p: &[f64], y: &[f64], y_pr: u64, y_gt: u64, cfg: &NDLossConfig) -> Result<Vec<f64>> {
    if p.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: p.len() });
    }
    let scale = 1.0 + nd_penalty(y_pr, y_gt, cfg.alpha, cfg.gamma)?;
    Ok(p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            // The clamp is flat below the floor.
            if yi == 0.0 || pi < PROB_FLOOR {
                0.0
            } else {
                -scale * yi / pi
            }
        })
        .collect())
}

/// Index of the largest probability; the first one wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// One count prediction: probabilities over `0..K` and the true count.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSample {
    pub probs: Vec<f64>,
    pub target: usize,
}

/// Mean ND loss over a batch of count predictions, where the predicted count
/// is the argmax class. Returns the mean and the per-sample weights `1 + d`.
pub fn nd_loss_batch(batch: &[CountSample], cfg: &NDLossConfig) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::invalid("batch", "empty"));
    }
    let mut total = 0.0;
    let mut weights = Vec::with_capacity(batch.len());
    for s in batch {
        let y_pr = argmax(&s.probs) as u64;
        let w = 1.0 + nd_penalty(y_pr, s.target as u64, cfg.alpha, cfg.gamma)?;
        total += w * cross_entropy_index(&s.probs, s.target)?;
        weights.push(w);
    }
    Ok((total / batch.len() as f64, weights))
}

/// `d` at integer differences `0..=max_diff`.
pub fn penalty_curve(alpha: f64, gamma: f64, max_diff: usize) -> Result<Vec<f64>> {
    check_factors(alpha, gamma)?;
    if max_diff < 2 {
        return Err(Error::invalid("max_diff", "must be at least 2"));
    }
    Ok((0..=max_diff).map(|k| penalty_unchecked(k as f64, alpha, gamma)).collect())
}

/// `f[i-1] - 2 f[i] + f[i+1]` for each interior point; entry `j` is centered at `j + 1`.
pub fn second_differences(curve: &[f64]) -> Vec<f64> {
    curve.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

/// Clamps a count into the vocabulary, warning when it overflows.
pub fn clamp_count(count: u64, count_vocab: usize) -> usize {
    let top = count_vocab - 1;
    if count as usize > top {
        log::warn!("count {count} exceeds the vocabulary; clamped to {top}");
        top
    } else {
        count as usize
    }
}
