//! Seeded synthetic data, a small ReLU network trained from scratch, and the
//! finite-difference oracle for the last-layer gradient.
//!
//! The trained network's output layer plays the role of the final linear
//! layer of a real classifier, so everything downstream (bundles, scores,
//! curves) can be exercised end to end without external models.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bundle::LastLayerBundle;
use crate::error::SynthError;
use crate::tensor::{Matrix, Vector};
use crate::trust::{counterfactual_targets, grad_last_layer, loss_gradient_wrt_logits, CounterfactualPlan};

/// Gaussian class blobs around means on a sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Radius of the sphere the class means sit on.
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_classes < 1 || self.dim < 1 || self.samples_per_class < 1 {
            return Err(SynthError::InvalidSpec("counts must be at least 1".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "class_separation must be non-negative, got {}",
                self.class_separation
            )));
        }
        Ok(())
    }
}

/// Inputs with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_classes: usize,
    pub means: Matrix,
    pub train: Split,
    /// `None` when there are too few samples for a 20% hold-out.
    pub eval: Option<Split>,
}

impl Dataset {
    pub fn total_len(&self) -> usize {
        self.train.len() + self.eval.as_ref().map_or(0, Split::len)
    }
}

fn split_of(rows: &[usize], inputs: &[f64], labels: &[usize], dim: usize) -> Option<Split> {
    if rows.is_empty() {
        return None;
    }
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        data.extend_from_slice(&inputs[r * dim..(r + 1) * dim]);
    }
    Some(Split {
        inputs: Matrix::new(rows.len(), dim, data).expect("finite samples"),
        labels: rows.iter().map(|&r| labels[r]).collect(),
    })
}

/// Draws the blobs and splits them 80/20 after a seeded shuffle.
pub fn gen_blobs(spec: &BlobSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;

    let mut means = Vec::with_capacity(spec.n_classes * dim);
    for _ in 0..spec.n_classes {
        let direction: Vec<f64> = loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        };
        means.extend(direction.into_iter().map(|x| x * spec.class_separation));
    }

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let total = spec.n_classes * spec.samples_per_class;
    let mut inputs = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for class in 0..spec.n_classes {
        let mean = &means[class * dim..(class + 1) * dim];
        for _ in 0..spec.samples_per_class {
            inputs.extend(mean.iter().map(|m| m + noise.sample(&mut rng)));
            labels.push(class);
        }
    }

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let n_train = total * 4 / 5;
    let n_train = if n_train == 0 { total } else { n_train };
    let (train_rows, eval_rows) = order.split_at(n_train);

    Ok(Dataset {
        n_classes: spec.n_classes,
        means: Matrix::new(spec.n_classes, dim, means)?,
        train: split_of(train_rows, &inputs, &labels, dim).expect("total >= 1"),
        eval: split_of(eval_rows, &inputs, &labels, dim),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            lr: 0.1,
            epochs: 500,
            seed: 0,
        }
    }
}

/// One hidden ReLU layer followed by a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    /// `input × hidden`
    pub hidden_weights: Matrix,
    pub hidden_bias: Vector,
    /// `hidden × classes`; the last layer whose gradients are scored.
    pub out_weights: Matrix,
    pub out_bias: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: TinyMlp,
    pub train_accuracy: f64,
    pub final_loss: f64,
}

/// `a[m×k] · b[k×n]`
fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&aik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `a[m×k]ᵀ · b[m×n]`
fn matmul_tn(a: &[f64], k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for (a_row, b_row) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
        for (&ai, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            if ai == 0.0 {
                continue;
            }
            for (o, &bj) in out_row.iter_mut().zip(b_row) {
                *o += ai * bj;
            }
        }
    }
    out
}

/// `a[m×n] · b[k×n]ᵀ`
fn matmul_nt(a: &[f64], n: usize, b: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() / n * k);
    for a_row in a.chunks_exact(n) {
        for b_row in b.chunks_exact(n) {
            out.push(a_row.iter().zip(b_row).map(|(x, y)| x * y).sum());
        }
    }
    out
}

fn add_bias(values: &mut [f64], bias: &[f64]) {
    for row in values.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums(values: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for row in values.chunks_exact(n) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

impl TinyMlp {
    /// He-initialized weights and zero biases.
    pub fn init(input: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self, SynthError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |fan_in: usize, len: usize| -> Vec<f64> {
            let scale = (2.0 / fan_in as f64).sqrt();
            (0..len)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>()
        };
        Ok(Self {
            hidden_weights: Matrix::new(input, hidden, he(input, input * hidden))?,
            hidden_bias: Vector::filled(hidden, 0.0)?,
            out_weights: Matrix::new(hidden, classes, he(hidden, hidden * classes))?,
            out_bias: Vector::filled(classes, 0.0)?,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden_weights.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_weights.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.out_weights.cols()
    }

    /// ReLU activations of the hidden layer, one row per input row.
    pub fn hidden_activations(&self, inputs: &Matrix) -> Matrix {
        let h = self.hidden_dim();
        let mut act = matmul(inputs.as_slice(), inputs.rows(), self.input_dim(), self.hidden_weights.as_slice(), h);
        add_bias(&mut act, self.hidden_bias.as_slice());
        act.iter_mut().for_each(|x| *x = x.max(0.0));
        Matrix::new(inputs.rows(), h, act).expect("finite parameters")
    }

    pub fn logits_from_hidden(&self, hidden: &Matrix) -> Matrix {
        let n = self.n_classes();
        let mut logits = matmul(hidden.as_slice(), hidden.rows(), self.hidden_dim(), self.out_weights.as_slice(), n);
        add_bias(&mut logits, self.out_bias.as_slice());
        Matrix::new(hidden.rows(), n, logits).expect("finite parameters")
    }

    pub fn predict(&self, inputs: &Matrix) -> Vec<usize> {
        let logits = self.logits_from_hidden(&self.hidden_activations(inputs));
        (0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                row.iter()
                    .enumerate()
                    .fold(0, |best, (i, v)| if *v > row[best] { i } else { best })
            })
            .collect()
    }

    pub fn accuracy(&self, split: &Split) -> f64 {
        let hits = self
            .predict(&split.inputs)
            .iter()
            .zip(&split.labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / split.len() as f64
    }
}

/// Softmax cross-entropy summed over rows; `logits` is overwritten with the
/// gradient of the mean loss over `total` rows.
fn cross_entropy(logits: &mut [f64], labels: &[usize], n: usize, total: usize) -> f64 {
    let m = total as f64;
    let mut loss = 0.0;
    for (row, &label) in logits.chunks_exact_mut(n).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        loss += sum.ln() - row[label].ln();
        for v in row.iter_mut() {
            *v /= sum * m;
        }
        row[label] -= 1.0 / m;
    }
    loss
}

/// A loss this many times above the starting loss counts as divergence even
/// while it is still finite.
const DIVERGENCE_FACTOR: f64 = 1e3;

/// Rows per work unit. Fixed so partial sums always combine the same way.
const TRAIN_CHUNK: usize = 1024;

struct Params {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

/// Loss sum and gradients of one row chunk, flattened in `Params` order.
fn chunk_pass(x: &[f64], labels: &[usize], total: usize, p: &Params, dims: (usize, usize, usize)) -> (f64, Vec<f64>) {
    let (input, h, n) = dims;
    let rows = labels.len();
    let mut act = matmul(x, rows, input, &p.w1, h);
    add_bias(&mut act, &p.b1);
    act.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut dlogits = matmul(&act, rows, h, &p.w2, n);
    add_bias(&mut dlogits, &p.b2);
    let loss = cross_entropy(&mut dlogits, labels, n, total);

    let mut dact = matmul_nt(&dlogits, n, &p.w2, h);
    for (d, a) in dact.iter_mut().zip(&act) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
    let mut grads = matmul_tn(x, input, &dact, h);
    grads.extend(column_sums(&dact, h));
    grads.extend(matmul_tn(&act, h, &dlogits, n));
    grads.extend(column_sums(&dlogits, n));
    (loss, grads)
}

/// Full-batch gradient descent on mean softmax cross-entropy.
///
/// Rows are processed in fixed chunks in parallel and the partial sums are
/// combined in chunk order, so results do not depend on the thread count.
pub fn train_mlp(train: &Split, n_classes: usize, config: &TrainConfig) -> Result<TrainOutcome, SynthError> {
    use rayon::prelude::*;

    if train.is_empty() {
        return Err(SynthError::EmptyDataset);
    }
    let input = train.inputs.cols();
    let (m, h, n) = (train.len(), config.hidden, n_classes);
    let x = train.inputs.as_slice();
    let model = TinyMlp::init(input, h, n, config.seed)?;

    let mut params = Params {
        w1: model.hidden_weights.as_slice().to_vec(),
        b1: model.hidden_bias.as_slice().to_vec(),
        w2: model.out_weights.as_slice().to_vec(),
        b2: model.out_bias.as_slice().to_vec(),
    };

    let mut initial_loss = None;
    let mut loss = f64::NAN;
    for epoch in 0..=config.epochs {
        let partials: Vec<(f64, Vec<f64>)> = x
            .par_chunks(TRAIN_CHUNK * input)
            .zip(train.labels.par_chunks(TRAIN_CHUNK))
            .map(|(xc, lc)| chunk_pass(xc, lc, m, &params, (input, h, n)))
            .collect();
        let mut grads = vec![0.0; partials[0].1.len()];
        let mut loss_sum = 0.0;
        for (l, g) in &partials {
            loss_sum += l;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        loss = loss_sum / m as f64;

        let reference = *initial_loss.get_or_insert(loss);
        if !loss.is_finite() || loss > DIVERGENCE_FACTOR * reference.max(1.0) {
            return Err(SynthError::TrainingDiverged { epoch, loss });
        }
        if epoch == config.epochs {
            break;
        }

        let mut g = grads.iter();
        for p in params
            .w1
            .iter_mut()
            .chain(&mut params.b1)
            .chain(&mut params.w2)
            .chain(&mut params.b2)
        {
            *p -= config.lr * g.next().expect("one gradient per parameter");
        }
    }

    let diverged = |_| SynthError::TrainingDiverged {
        epoch: config.epochs,
        loss,
    };
    let model = TinyMlp {
        hidden_weights: Matrix::new(input, h, params.w1).map_err(diverged)?,
        hidden_bias: Vector::new(params.b1).map_err(diverged)?,
        out_weights: Matrix::new(h, n, params.w2).map_err(diverged)?,
        out_bias: Vector::new(params.b2).map_err(diverged)?,
    };
    let train_accuracy = model.accuracy(train);
    Ok(TrainOutcome {
        model,
        train_accuracy,
        final_loss: loss,
    })
}

/// Bundle of the model's last layer over `split`: hidden activations as
/// features, output layer as weights and bias, logits stored.
pub fn export_bundle(model: &TinyMlp, split: &Split) -> LastLayerBundle {
    let features = model.hidden_activations(&split.inputs);
    let logits = model.logits_from_hidden(&features);
    let mut meta = BTreeMap::new();
    meta.insert("source".to_owned(), "synthetic-blobs".to_owned());
    meta.insert("model".to_owned(), format!(
        "mlp-{}-{}-{}",
        model.input_dim(),
        model.hidden_dim(),
        model.n_classes()
    ));
    LastLayerBundle {
        features,
        weights: model.out_weights.clone(),
        bias: model.out_bias.clone(),
        labels: split.labels.iter().map(|&l| l as i64).collect(),
        logits: Some(logits),
        meta,
    }
}

/// Central-difference gradient of the counterfactual loss w.r.t. `weights`,
/// recomputing logits as `Wᵀf + b` at every perturbation while the targets in
/// `plan` stay fixed.
pub fn finite_diff_grad(
    features: &Vector,
    weights: &Matrix,
    bias: &Vector,
    plan: &CounterfactualPlan,
    h: f64,
) -> Matrix {
    assert!(h > 0.0, "step must be positive");
    let normalizer = plan.loss_normalizer();
    let loss_at = |w: &Matrix| {
        let mut logits = w
            .transpose_mul_vec(features.as_slice())
            .expect("feature width matches weights");
        for (y, b) in logits.iter_mut().zip(bias.iter()) {
            *y += b;
        }
        plan.loss(&logits, normalizer)
    };
    let (d, n) = weights.shape();
    let mut out = Vec::with_capacity(d * n);
    for i in 0..d {
        for j in 0..n {
            let w = weights.get(i, j);
            let plus = loss_at(&weights.with_entry(i, j, w + h).expect("finite step"));
            let minus = loss_at(&weights.with_entry(i, j, w - h).expect("finite step"));
            out.push((plus - minus) / (2.0 * h));
        }
    }
    Matrix::new(d, n, out).expect("finite differences of finite losses")
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    const FLOOR: f64 = 1e-8;
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub h: f64,
    pub max_dim: usize,
    pub max_classes: usize,
    pub tolerance: f64,
    /// Halves the analytic gradient to prove the harness can fail.
    pub inject_bug: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            seed: 0,
            h: 1e-4,
            max_dim: 16,
            max_classes: 12,
            tolerance: 1e-4,
            inject_bug: false,
        }
    }
}

/// Worst entry seen by a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckWorst {
    pub seed: u64,
    pub row: usize,
    pub col: usize,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub instances: usize,
    pub entries: usize,
    pub max_rel_err: f64,
    pub worst: GradcheckWorst,
    pub passed: bool,
}

/// A random last-layer instance: features, weights, bias and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradInstance {
    pub features: Vector,
    pub weights: Matrix,
    pub bias: Vector,
    pub k: usize,
}

impl GradInstance {
    pub fn random(seed: u64, max_dim: usize, max_classes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=max_dim.max(1));
        let n = rng.random_range(2..=max_classes.max(2));
        let k = rng.random_range(1..n);
        let features = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let weights = (0..d * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let bias = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self {
            features: Vector::new(features).expect("d >= 1"),
            weights: Matrix::new(d, n, weights).expect("shape"),
            bias: Vector::new(bias).expect("n >= 2"),
            k,
        }
    }

    pub fn logits(&self) -> Vector {
        let mut y = self
            .weights
            .transpose_mul_vec(self.features.as_slice())
            .expect("shape");
        for (v, b) in y.iter_mut().zip(self.bias.iter()) {
            *v += b;
        }
        Vector::new(y).expect("finite")
    }
}

/// Compares the closed-form last-layer gradient with central differences
/// over seeded random instances; instance `i` uses seed `config.seed + i`.
pub fn gradcheck(config: &GradcheckConfig) -> GradcheckReport {
    let mut worst = GradcheckWorst {
        seed: config.seed,
        row: 0,
        col: 0,
        rel_err: 0.0,
    };
    let mut entries = 0;
    for i in 0..config.instances {
        let seed = config.seed.wrapping_add(i as u64);
        let inst = GradInstance::random(seed, config.max_dim, config.max_classes);
        let logits = inst.logits();
        let plan = counterfactual_targets(&logits, inst.k).expect("k drawn in range");
        let mut analytic = grad_last_layer(&inst.features, &loss_gradient_wrt_logits(&logits, &plan));
        if config.inject_bug {
            analytic = analytic.map(|g| 0.5 * g).expect("finite");
        }
        let numeric = finite_diff_grad(&inst.features, &inst.weights, &inst.bias, &plan, config.h);
        let (d, n) = analytic.shape();
        for r in 0..d {
            for c in 0..n {
                entries += 1;
                let err = relative_error(analytic.get(r, c), numeric.get(r, c));
                if err > worst.rel_err {
                    worst = GradcheckWorst {
                        seed,
                        row: r,
                        col: c,
                        rel_err: err,
                    };
                }
            }
        }
    }
    GradcheckReport {
        instances: config.instances,
        entries,
        max_rel_err: worst.rel_err,
        worst,
        passed: worst.rel_err < config.tolerance,
    }
}
