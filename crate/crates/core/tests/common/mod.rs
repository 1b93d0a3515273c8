//! Test-only reference implementations. Nothing here calls into the
//! library's scoring path; inputs and outputs are plain slices.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prediction and counterfactual classes by repeated linear scans.
pub fn brute_plan(logits: &[f64], k: usize) -> (usize, Vec<usize>) {
    let mut taken = vec![false; logits.len()];
    let mut order = Vec::new();
    for _ in 0..=k {
        let mut best: Option<usize> = None;
        for (i, &y) in logits.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if logits[b] >= y => {}
                _ => best = Some(i),
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        order.push(b);
    }
    (order[0], order[1..].to_vec())
}

pub fn brute_targets(n: usize, counterfactuals: &[usize]) -> Vec<f64> {
    (0..n)
        .map(|j| if counterfactuals.contains(&j) { 1.0 } else { 0.0 })
        .collect()
}

/// Welford running variance (population).
pub fn welford_variance(values: &[f64]) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    m2 / values.len() as f64
}

/// Everything the brute-force route produces for one sample.
#[derive(Debug, Clone)]
pub struct BruteChain {
    pub predicted: usize,
    pub counterfactuals: Vec<usize>,
    pub targets: Vec<f64>,
    pub dj_dy: Vec<f64>,
    /// `grad[i][j]`
    pub grad: Vec<Vec<f64>>,
    pub variance: Vec<f64>,
    /// `None` when every variance is zero.
    pub score: Option<f64>,
}

/// GradTrust computed the long way: explicit loss derivative, explicit
/// `d × N` gradient, squared entries, Welford variance per column.
pub fn brute_gradtrust(features: &[f64], logits: &[f64], k: usize, normalizer: Option<f64>) -> BruteChain {
    let n = logits.len();
    let (predicted, counterfactuals) = brute_plan(logits, k);
    let targets = brute_targets(n, &counterfactuals);
    let c = normalizer.unwrap_or(if k == 1 { 1.0 } else { 1.0 / (k as f64 - 1.0) });
    let dj_dy: Vec<f64> = (0..n).map(|j| c * 2.0 * (logits[j] - targets[j])).collect();
    let grad: Vec<Vec<f64>> = features
        .iter()
        .map(|&f| dj_dy.iter().map(|&r| f * r).collect())
        .collect();
    let variance: Vec<f64> = (0..n)
        .map(|j| {
            let squared: Vec<f64> = grad.iter().map(|row| row[j] * row[j]).collect();
            welford_variance(&squared)
        })
        .collect();

    let mut top = 0;
    for j in 1..n {
        if variance[j] > variance[top] {
            top = j;
        }
    }
    let pool: Vec<f64> = counterfactuals
        .iter()
        .filter(|&&j| j != top)
        .map(|&j| variance[j])
        .collect();
    let denom = if pool.is_empty() {
        variance[predicted]
    } else {
        pool.iter().sum::<f64>() / pool.len() as f64
    };
    let score = if denom > 0.0 {
        Some(variance[top] / denom)
    } else if variance[top] > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    };
    BruteChain {
        predicted,
        counterfactuals,
        targets,
        dj_dy,
        grad,
        variance,
        score,
    }
}

/// Random `(features, logits, k)` with `d ≤ 16`, `N ≤ 12`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, usize) {
    let d = rng.random_range(2..=16);
    let n = rng.random_range(2..=12);
    let k = rng.random_range(1..n);
    let f = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
    (f, y, k)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Macro F1 over labels present, from a full confusion-count table.
pub fn brute_macro_f1(pairs: &[(usize, usize)]) -> f64 {
    let classes = pairs.iter().map(|p| p.0.max(p.1)).max().unwrap() + 1;
    let mut confusion = vec![vec![0u64; classes]; classes];
    for &(label, pred) in pairs {
        confusion[label][pred] += 1;
    }
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..classes {
        let support: u64 = confusion[c].iter().sum();
        if support == 0 {
            continue;
        }
        present += 1;
        let tp = confusion[c][c];
        let predicted: u64 = (0..classes).map(|r| confusion[r][c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = tp as f64 / support as f64;
        total += if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    total / present as f64
}
