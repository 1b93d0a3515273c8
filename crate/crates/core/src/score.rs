//! Per-sample score tables and their CSV form.
//!
//! CSV layout: `sample_id,label,prediction,correct,<metric>...`. Finite scores
//! use the shortest round-trip decimal form, `inf` marks an unbounded
//! GradTrust score and `degenerate` a sample where it is undefined.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::baselines::{
    entropy_trust, gradnorm_trust, margin_trust_with, nll_trust, softmax_confidence, MarginMode,
    MetricId,
};
use crate::bundle::{compute_logits, LastLayerBundle};
use crate::error::{EvalError, TrustError};
use crate::trust::{batch_gradtrust, predict, TrustConfig};

pub const DEGENERATE_TOKEN: &str = "degenerate";

/// A trust score, or the marker for a sample where the score is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Value(f64),
    Degenerate,
}

impl Score {
    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::Degenerate => None,
        }
    }

    pub fn is_degenerate(self) -> bool {
        matches!(self, Score::Degenerate)
    }

    pub fn to_csv_field(self) -> String {
        match self {
            Score::Value(v) => format!("{v}"),
            Score::Degenerate => DEGENERATE_TOKEN.to_owned(),
        }
    }

    pub fn parse_field(field: &str) -> Option<Score> {
        if field == DEGENERATE_TOKEN {
            return Some(Score::Degenerate);
        }
        match field.parse::<f64>() {
            Ok(v) if !v.is_nan() => Some(Score::Value(v)),
            _ => None,
        }
    }
}

/// Where degenerate samples sit in the trust ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Least trusted, below every real score.
    #[default]
    Bottom,
    /// Most trusted, above every real score including `+inf`.
    Top,
}

/// Totally ordered ranking key for a score under a degenerate policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankKey {
    tier: u8,
    value: f64,
}

impl RankKey {
    pub fn new(score: Score, policy: DegeneratePolicy) -> Self {
        match (score, policy) {
            (Score::Value(value), _) => RankKey { tier: 1, value },
            (Score::Degenerate, DegeneratePolicy::Bottom) => RankKey { tier: 0, value: 0.0 },
            (Score::Degenerate, DegeneratePolicy::Top) => RankKey { tier: 2, value: 0.0 },
        }
    }

    pub fn from_value(value: f64) -> Self {
        RankKey { tier: 1, value }
    }
}

impl Eq for RankKey {}

impl Ord for RankKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tier
            .cmp(&other.tier)
            .then(self.value.total_cmp(&other.value))
    }
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub sample_id: u64,
    pub label: usize,
    pub prediction: usize,
    pub correct: bool,
    /// Aligned with `ScoreTable::metrics`.
    pub scores: Vec<Score>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    metrics: Vec<MetricId>,
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    /// Checks unique ids, `correct ⇔ label = prediction`, row widths and NaN-freeness.
    pub fn new(metrics: Vec<MetricId>, rows: Vec<ScoreRow>) -> Result<Self, EvalError> {
        let mut seen = HashSet::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let line = i as u64 + 2;
            if !seen.insert(row.sample_id) {
                return Err(EvalError::DuplicateSample(row.sample_id));
            }
            if row.correct != (row.label == row.prediction) {
                return Err(EvalError::Malformed {
                    line,
                    reason: format!(
                        "correct = {} but label {} vs prediction {}",
                        row.correct, row.label, row.prediction
                    ),
                });
            }
            if row.scores.len() != metrics.len() {
                return Err(EvalError::Malformed {
                    line,
                    reason: format!("{} scores for {} metrics", row.scores.len(), metrics.len()),
                });
            }
            if row.scores.iter().any(|s| s.value().is_some_and(f64::is_nan)) {
                return Err(EvalError::Malformed {
                    line,
                    reason: "NaN score".into(),
                });
            }
        }
        Ok(Self { metrics, rows })
    }

    pub fn metrics(&self) -> &[MetricId] {
        &self.metrics
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn metric_index(&self, metric: MetricId) -> Result<usize, EvalError> {
        self.metrics
            .iter()
            .position(|&m| m == metric)
            .ok_or_else(|| EvalError::MissingMetric(metric.to_string()))
    }

    /// One metric's scores, in row order.
    pub fn column(&self, metric: MetricId) -> Result<Vec<Score>, EvalError> {
        let idx = self.metric_index(metric)?;
        Ok(self.rows.iter().map(|r| r.scores[idx]).collect())
    }

    pub fn overall_accuracy(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.correct).count() as f64 / self.rows.len() as f64
    }

    /// Copy with one metric's scores replaced through `f`. Degenerate entries stay degenerate.
    pub fn map_metric(&self, metric: MetricId, f: impl Fn(f64) -> f64) -> Result<Self, EvalError> {
        let idx = self.metric_index(metric)?;
        let mut out = self.clone();
        for row in &mut out.rows {
            if let Score::Value(v) = row.scores[idx] {
                row.scores[idx] = Score::Value(f(v));
            }
        }
        Ok(out)
    }

    /// Copy with one metric's column replaced by `scores` (row order).
    pub fn with_column(&self, metric: MetricId, scores: Vec<Score>) -> Result<Self, EvalError> {
        let idx = self.metric_index(metric)?;
        if scores.len() != self.rows.len() {
            return Err(EvalError::Malformed {
                line: 0,
                reason: format!("{} scores for {} rows", scores.len(), self.rows.len()),
            });
        }
        let mut out = self.clone();
        for (row, s) in out.rows.iter_mut().zip(scores) {
            if s.value().is_some_and(f64::is_nan) {
                return Err(EvalError::Malformed {
                    line: row.sample_id + 2,
                    reason: "NaN score".into(),
                });
            }
            row.scores[idx] = s;
        }
        Ok(out)
    }

    pub fn degenerate_count(&self, metric: MetricId) -> Result<usize, EvalError> {
        Ok(self
            .column(metric)?
            .into_iter()
            .filter(|s| s.is_degenerate())
            .count())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EvalError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec![
            "sample_id".to_owned(),
            "label".into(),
            "prediction".into(),
            "correct".into(),
        ];
        header.extend(self.metrics.iter().map(ToString::to_string));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![
                row.sample_id.to_string(),
                row.label.to_string(),
                row.prediction.to_string(),
                row.correct.to_string(),
            ];
            record.extend(row.scores.iter().map(|s| s.to_csv_field()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        self.write_csv(File::create(path)?)
    }

    /// Parses a score CSV. Errors carry the 1-based line number.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self, EvalError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        let fixed = ["sample_id", "label", "prediction", "correct"];
        for (i, name) in fixed.iter().enumerate() {
            if header.get(i) != Some(name) {
                return Err(EvalError::Malformed {
                    line: 1,
                    reason: format!("expected column {} to be {name:?}", i + 1),
                });
            }
        }
        let metrics = header
            .iter()
            .skip(fixed.len())
            .map(|name| {
                name.parse::<MetricId>()
                    .map_err(|reason| EvalError::Malformed { line: 1, reason })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| EvalError::Malformed {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |what: &str, field: &str| EvalError::Malformed {
                line,
                reason: format!("cannot parse {what} from {field:?}"),
            };
            let field = |i: usize| record.get(i).unwrap_or("");
            let sample_id = field(0).parse().map_err(|_| bad("sample_id", field(0)))?;
            let label = field(1).parse().map_err(|_| bad("label", field(1)))?;
            let prediction = field(2).parse().map_err(|_| bad("prediction", field(2)))?;
            let correct = parse_flag(field(3)).ok_or_else(|| bad("correct", field(3)))?;
            let scores = metrics
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let f = field(4 + j);
                    Score::parse_field(f).ok_or_else(|| bad(m.as_str(), f))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(ScoreRow {
                sample_id,
                label,
                prediction,
                correct,
                scores,
            });
        }
        Self::new(metrics, rows).map_err(|e| match e {
            EvalError::DuplicateSample(id) => EvalError::Malformed {
                line: 0,
                reason: format!("duplicate sample id {id}"),
            },
            other => other,
        })
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::read_csv(File::open(path)?)
    }
}

/// Knobs for the scoring pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoringConfig {
    pub trust: TrustConfig,
    pub margin: MarginMode,
}

/// Scores every sample of a validated bundle under each requested metric.
/// `true`/`false`, also accepting `1`/`0`.
fn parse_flag(field: &str) -> Option<bool> {
    match field.trim() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

pub fn score_bundle(
    bundle: &LastLayerBundle,
    metrics: &[MetricId],
    config: &ScoringConfig,
) -> Result<ScoreTable, TrustError> {
    let computed;
    let logits = match &bundle.logits {
        Some(l) => l,
        None => {
            computed = compute_logits(bundle);
            &computed
        }
    };
    let gradtrust = if metrics.contains(&MetricId::Gradtrust) {
        Some(batch_gradtrust(bundle, &config.trust)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(bundle.n_samples());
    for m in 0..bundle.n_samples() {
        let y = logits.row_vector(m);
        let f = bundle.features.row_vector(m);
        let prediction = predict(&y)?;
        let label = bundle.labels[m] as usize;
        let scores = metrics
            .iter()
            .map(|metric| match metric {
                MetricId::Softmax => Score::Value(softmax_confidence(&y)),
                MetricId::Entropy => Score::Value(entropy_trust(&y)),
                MetricId::Nll => Score::Value(nll_trust(&y)),
                MetricId::Margin => Score::Value(margin_trust_with(&y, config.margin)),
                MetricId::Gradnorm => Score::Value(gradnorm_trust(&f, &y)),
                MetricId::Gradtrust => gradtrust.as_ref().expect("computed above")[m],
            })
            .collect();
        rows.push(ScoreRow {
            sample_id: m as u64,
            label,
            prediction,
            correct: label == prediction,
            scores,
        });
    }
    Ok(ScoreTable::new(metrics.to_vec(), rows).expect("rows built consistently"))
}
