//! Comparison trust scores computable from logits and features alone.
//!
//! Every score follows the same orientation as GradTrust: higher means the
//! prediction is more trustworthy. Uncertainty measures (entropy, NLL) are
//! negated to fit.

use std::fmt;
use std::str::FromStr;

use crate::tensor::{logsumexp, softmax_of, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    Softmax,
    Entropy,
    Nll,
    Margin,
    Gradnorm,
    Gradtrust,
}

impl MetricId {
    pub const ALL: [MetricId; 6] = [
        MetricId::Softmax,
        MetricId::Entropy,
        MetricId::Nll,
        MetricId::Margin,
        MetricId::Gradnorm,
        MetricId::Gradtrust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Softmax => "softmax",
            MetricId::Entropy => "entropy",
            MetricId::Nll => "nll",
            MetricId::Margin => "margin",
            MetricId::Gradnorm => "gradnorm",
            MetricId::Gradtrust => "gradtrust",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Whether the margin is taken between probabilities or raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginMode {
    #[default]
    Probability,
    Logit,
}

/// Largest softmax probability.
pub fn softmax_confidence(logits: &Vector) -> f64 {
    softmax_of(logits.as_slice())
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Negative Shannon entropy of the softmax distribution, in nats.
pub fn entropy_trust(logits: &Vector) -> f64 {
    let p = softmax_of(logits.as_slice());
    p.iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.ln())
        .sum()
}

/// Log-probability of the predicted class, `y_max - logsumexp(y)`.
pub fn nll_trust(logits: &Vector) -> f64 {
    let y = logits.as_slice();
    let top = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top - logsumexp(y)
}

pub fn margin_trust(logits: &Vector) -> f64 {
    margin_trust_with(logits, MarginMode::Probability)
}

/// Gap between the top two entries, on probabilities or raw logits.
pub fn margin_trust_with(logits: &Vector, mode: MarginMode) -> f64 {
    let values = match mode {
        MarginMode::Probability => softmax_of(logits.as_slice()),
        MarginMode::Logit => logits.as_slice().to_vec(),
    };
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    first - second
}

/// L1 norm of the last-layer weight gradient of cross-entropy against the
/// uniform target. The gradient is `f ⊗ (softmax(y) - 1/N)`, so its entrywise
/// L1 norm factors as `‖f‖₁ · ‖softmax(y) - 1/N‖₁`.
pub fn gradnorm_trust(features: &Vector, logits: &Vector) -> f64 {
    let p = softmax_of(logits.as_slice());
    let uniform = 1.0 / p.len() as f64;
    let feature_l1: f64 = features.iter().map(|x| x.abs()).sum();
    let residual_l1: f64 = p.iter().map(|pi| (pi - uniform).abs()).sum();
    feature_l1 * residual_l1
}
