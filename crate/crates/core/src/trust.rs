//! GradTrust: trust in a prediction measured by how unevenly the last-layer
//! gradient of a counterfactual loss spreads across classes.
//!
//! For one sample with penultimate features `f` and logits `y`:
//!
//! 1. The prediction is `argmax y`. The counterfactual set `C` is the `k`
//!    next-highest classes; the target vector has ones on `C` and zeros
//!    everywhere else, including the prediction.
//! 2. `J = (1/(k-1)) Σ_j (y_j - t_j)²` is differentiated w.r.t. the weights of
//!    the final linear layer. Since `y = Wᵀf + b`, the gradient is the outer
//!    product `f ⊗ ∂J/∂y`.
//! 3. For each class column of the gradient, the variance of its squared
//!    entries is taken. The score is the largest of these variances divided
//!    by the mean over the counterfactual classes.
//!
//! The rank-1 structure makes every column's variance equal to
//! `(∂J/∂y_j)⁴ · Var(f⊙f)`, so the score does not depend on `f` beyond the
//! requirement that `Var(f⊙f) > 0`, and it does not depend on the loss
//! normalizer either.

use rayon::prelude::*;

use crate::bundle::{compute_logits, LastLayerBundle};
use crate::error::TrustError;
use crate::score::Score;
use crate::tensor::{outer, variance_of, Matrix, Vector};

/// Number of counterfactual classes used unless configured otherwise.
pub const DEFAULT_K: usize = 10;

/// What the per-class spread is measured over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    /// Variance of the elementwise-squared gradient column.
    #[default]
    Squared,
    /// Variance of the raw gradient column.
    Raw,
}

/// Which classes feed the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DenominatorMode {
    /// Counterfactual classes, minus the argmax class if it is one of them.
    #[default]
    Counterfactuals,
    /// Every class except the argmax class.
    AllRemaining,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustConfig {
    pub k: usize,
    pub variance: VarianceMode,
    pub denominator: DenominatorMode,
    /// Replaces the `1/(k-1)` loss normalizer when set.
    pub loss_normalizer: Option<f64>,
}

impl Default for TrustConfig {
    fn default() -> Self {
        Self::with_k(DEFAULT_K)
    }
}

impl TrustConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            variance: VarianceMode::default(),
            denominator: DenominatorMode::default(),
            loss_normalizer: None,
        }
    }

    /// `k` clamped to `N-1`, for datasets with fewer classes than the default.
    pub fn clamped_to(mut self, n_classes: usize) -> Self {
        self.k = self.k.min(n_classes.saturating_sub(1)).max(1);
        self
    }
}

/// Prediction plus the counterfactual classes and their one-hot targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPlan {
    pub predicted: usize,
    /// Counterfactual classes, highest logit first.
    pub counterfactuals: Vec<usize>,
    pub targets: Vector,
    pub k: usize,
}

impl CounterfactualPlan {
    /// `1/(k-1)`, with `k = 1` mapped to 1.
    pub fn loss_normalizer(&self) -> f64 {
        if self.k > 1 {
            1.0 / (self.k - 1) as f64
        } else {
            1.0
        }
    }

    /// Counterfactual MSE `normalizer · Σ_j (y_j - t_j)²`.
    pub fn loss(&self, logits: &[f64], normalizer: f64) -> f64 {
        normalizer
            * logits
                .iter()
                .zip(self.targets.iter())
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
    }
}

/// Intermediate quantities of one score evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub plan: CounterfactualPlan,
    /// `d × N` weight gradient.
    pub grad: Matrix,
    /// `∂J/∂y`.
    pub residual_grad: Vector,
    /// Per-class spread of the gradient column.
    pub variance: Vector,
    /// Class holding the largest spread.
    pub argmax: usize,
    /// May be `+inf`.
    pub score: f64,
}

/// Class indices ordered by descending value, ties by ascending index.
fn ranked(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best })
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict(logits: &Vector) -> Result<usize, TrustError> {
    if logits.len() < 2 {
        return Err(TrustError::TooFewClasses(logits.len()));
    }
    Ok(argmax(logits.as_slice()))
}

pub fn counterfactual_targets(logits: &Vector, k: usize) -> Result<CounterfactualPlan, TrustError> {
    let n = logits.len();
    if n < 2 {
        return Err(TrustError::TooFewClasses(n));
    }
    if k < 1 || k > n - 1 {
        return Err(TrustError::InvalidK { k, n_classes: n });
    }
    let order = ranked(logits.as_slice());
    let predicted = order[0];
    let counterfactuals = order[1..=k].to_vec();
    let mut targets = vec![0.0; n];
    for &c in &counterfactuals {
        targets[c] = 1.0;
    }
    Ok(CounterfactualPlan {
        predicted,
        counterfactuals,
        targets: Vector::new(targets).expect("n >= 2"),
        k,
    })
}

/// `∂J/∂y_j = 2·normalizer·(y_j - t_j)` with the plan's own normalizer.
pub fn loss_gradient_wrt_logits(logits: &Vector, plan: &CounterfactualPlan) -> Vector {
    loss_gradient_scaled(logits, plan, plan.loss_normalizer())
}

pub fn loss_gradient_scaled(logits: &Vector, plan: &CounterfactualPlan, normalizer: f64) -> Vector {
    assert_eq!(logits.len(), plan.targets.len(), "plan built for other logits");
    Vector::new(
        logits
            .iter()
            .zip(plan.targets.iter())
            .map(|(y, t)| 2.0 * normalizer * (y - t))
            .collect(),
    )
    .expect("finite logits and normalizer")
}

/// Weight gradient of a linear layer: `f ⊗ ∂J/∂y`. The bias gradient is not part of it.
pub fn grad_last_layer(features: &Vector, residual_grad: &Vector) -> Matrix {
    outer(features, residual_grad)
}

/// Per-class spread of the gradient columns, squared-entry variance.
pub fn variance_vector(grad: &Matrix) -> Vector {
    variance_vector_with(grad, VarianceMode::Squared)
}

pub fn variance_vector_with(grad: &Matrix, mode: VarianceMode) -> Vector {
    let (d, n) = grad.shape();
    let mut column = vec![0.0; d];
    let out = (0..n)
        .map(|j| {
            for (i, slot) in column.iter_mut().enumerate() {
                let g = grad.get(i, j);
                *slot = match mode {
                    VarianceMode::Squared => g * g,
                    VarianceMode::Raw => g,
                };
            }
            variance_of(&column)
        })
        .collect();
    Vector::new(out).expect("variances of finite values")
}

/// Runs the whole chain and keeps every intermediate.
pub fn gradient_report(
    features: &Vector,
    logits: &Vector,
    config: &TrustConfig,
) -> Result<GradientReport, TrustError> {
    let plan = counterfactual_targets(logits, config.k)?;
    let normalizer = config
        .loss_normalizer
        .unwrap_or_else(|| plan.loss_normalizer());
    let residual_grad = loss_gradient_scaled(logits, &plan, normalizer);
    let grad = grad_last_layer(features, &residual_grad);
    let variance = variance_vector_with(&grad, config.variance);

    let v = variance.as_slice();
    let top = argmax(v);
    let numerator = v[top];
    let pool: Vec<usize> = match config.denominator {
        DenominatorMode::Counterfactuals => plan
            .counterfactuals
            .iter()
            .copied()
            .filter(|&c| c != top)
            .collect(),
        DenominatorMode::AllRemaining => (0..v.len()).filter(|&j| j != top).collect(),
    };
    // k = 1 with the lone counterfactual holding the max leaves nothing to
    // average; compare against the predicted class instead.
    let denominator = if pool.is_empty() {
        v[plan.predicted]
    } else {
        pool.iter().map(|&j| v[j]).sum::<f64>() / pool.len() as f64
    };

    let score = if denominator > 0.0 {
        numerator / denominator
    } else if numerator > 0.0 {
        f64::INFINITY
    } else {
        return Err(TrustError::DegenerateScore);
    };

    Ok(GradientReport {
        plan,
        grad,
        residual_grad,
        variance,
        argmax: top,
        score,
    })
}

pub fn gradtrust_score(features: &Vector, logits: &Vector, k: usize) -> Result<f64, TrustError> {
    gradtrust_score_with(features, logits, &TrustConfig::with_k(k))
}

pub fn gradtrust_score_with(
    features: &Vector,
    logits: &Vector,
    config: &TrustConfig,
) -> Result<f64, TrustError> {
    gradient_report(features, logits, config).map(|r| r.score)
}

/// One score per sample, in input order. Degenerate samples come back as
/// `Score::Degenerate`; an invalid `k` fails the whole batch.
pub fn batch_gradtrust(bundle: &LastLayerBundle, config: &TrustConfig) -> Result<Vec<Score>, TrustError> {
    let n = bundle.n_classes();
    if n < 2 {
        return Err(TrustError::TooFewClasses(n));
    }
    if config.k < 1 || config.k > n - 1 {
        return Err(TrustError::InvalidK {
            k: config.k,
            n_classes: n,
        });
    }
    let computed;
    let logits = match &bundle.logits {
        Some(l) => l,
        None => {
            computed = compute_logits(bundle);
            &computed
        }
    };
    (0..bundle.n_samples())
        .into_par_iter()
        .map(|m| {
            let features = bundle.features.row_vector(m);
            let logits = logits.row_vector(m);
            match gradtrust_score_with(&features, &logits, config) {
                Ok(s) => Ok(Score::Value(s)),
                Err(TrustError::DegenerateScore) => Ok(Score::Degenerate),
                Err(e) => Err(e),
            }
        })
        .collect()
}
