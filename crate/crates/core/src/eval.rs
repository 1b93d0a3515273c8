//! Percentile-binned accuracy and F1 curves over trust scores.
//!
//! For level `p` in `1..=bins` the threshold is the nearest-rank percentile
//! of the scores (ascending index `ceil(p·M/bins)`), and every sample whose
//! score is at least the threshold is retained. Ties stay together, so the
//! retained set is never empty. A curve's area is `100 ×` the mean of its bin
//! values, which puts AUAC and AUFC on a 0–100 scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::baselines::MetricId;
use crate::error::EvalError;
use crate::score::{DegeneratePolicy, RankKey, ScoreRow, ScoreTable};

pub const DEFAULT_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveKind {
    Accuracy,
    F1,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Accuracy => "accuracy",
            CurveKind::F1 => "f1",
        }
    }
}

/// F1 averaging over the retained subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Average {
    /// Unweighted mean over classes whose label occurs in the subset.
    #[default]
    Macro,
    /// Pooled counts; equals accuracy for single-label data.
    Micro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub bins: usize,
    pub degenerate: DegeneratePolicy,
    pub f1: F1Average,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            degenerate: DegeneratePolicy::default(),
            f1: F1Average::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub metric: MetricId,
    pub kind: CurveKind,
    /// `values[p - 1]` is the value at level `p`.
    pub values: Vec<f64>,
    pub area: f64,
}

impl EvalCurve {
    fn new(metric: MetricId, kind: CurveKind, values: Vec<f64>) -> Self {
        let area = area(&values);
        Self {
            metric,
            kind,
            values,
            area,
        }
    }

    /// `(level, value)` pairs with levels starting at 1.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (i + 1, v))
    }
}

/// `100 ×` the mean bin value.
pub fn area(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    100.0 * values.iter().sum::<f64>() / values.len() as f64
}

/// 1-based ascending rank of the threshold for level `p` of `bins`.
fn nearest_rank(m: usize, level: usize, bins: usize) -> usize {
    (level * m).div_ceil(bins).max(1)
}

fn check_level(level: usize, bins: usize) -> Result<(), EvalError> {
    if bins == 0 {
        return Err(EvalError::NoBins);
    }
    if level < 1 || level > bins {
        return Err(EvalError::LevelOutOfRange { level, bins });
    }
    Ok(())
}

/// Nearest-rank percentile `p ∈ 1..=100` of `scores`.
pub fn percentile_threshold(scores: &[f64], p: usize) -> Result<f64, EvalError> {
    check_level(p, DEFAULT_BINS)?;
    if scores.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[nearest_rank(sorted.len(), p, DEFAULT_BINS) - 1])
}

/// Retained row indices for every level, computed from one sort.
fn retained_sets<'a>(
    table: &'a ScoreTable,
    metric: MetricId,
    options: &EvalOptions,
) -> Result<impl Iterator<Item = Vec<&'a ScoreRow>> + 'a, EvalError> {
    if options.bins == 0 {
        return Err(EvalError::NoBins);
    }
    if table.is_empty() {
        return Err(EvalError::EmptyTable);
    }
    let idx = table.metric_index(metric)?;
    let mut ranked: Vec<(RankKey, &ScoreRow)> = table
        .rows()
        .iter()
        .map(|r| (RankKey::new(r.scores[idx], options.degenerate), r))
        .collect();
    // retention compares keys only, so tied rows are never split
    ranked.sort_by_key(|(key, _)| *key);
    let m = ranked.len();
    let bins = options.bins;
    Ok((1..=bins).map(move |level| {
        let threshold = ranked[nearest_rank(m, level, bins) - 1].0;
        let start = ranked.partition_point(|(key, _)| *key < threshold);
        ranked[start..].iter().map(|(_, r)| *r).collect()
    }))
}

fn accuracy_of(rows: &[&ScoreRow]) -> f64 {
    rows.iter().filter(|r| r.correct).count() as f64 / rows.len() as f64
}

fn f1_of(rows: &[&ScoreRow], average: F1Average) -> f64 {
    match average {
        F1Average::Micro => accuracy_of(rows),
        F1Average::Macro => {
            // class -> (tp, fp, fn)
            let mut counts: BTreeMap<usize, (u64, u64, u64)> = BTreeMap::new();
            for r in rows {
                counts.entry(r.label).or_default();
            }
            for r in rows {
                if r.correct {
                    counts.get_mut(&r.label).unwrap().0 += 1;
                } else {
                    counts.get_mut(&r.label).unwrap().2 += 1;
                    if let Some(c) = counts.get_mut(&r.prediction) {
                        c.1 += 1;
                    }
                }
            }
            let total: f64 = counts
                .values()
                .map(|&(tp, fp, fn_)| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
                .sum();
            total / counts.len() as f64
        }
    }
}

pub fn accuracy_curve(table: &ScoreTable, metric: MetricId) -> Result<EvalCurve, EvalError> {
    accuracy_curve_with(table, metric, &EvalOptions::default())
}

pub fn accuracy_curve_with(
    table: &ScoreTable,
    metric: MetricId,
    options: &EvalOptions,
) -> Result<EvalCurve, EvalError> {
    let values = retained_sets(table, metric, options)?
        .map(|rows| accuracy_of(&rows))
        .collect();
    Ok(EvalCurve::new(metric, CurveKind::Accuracy, values))
}

pub fn f1_curve(table: &ScoreTable, metric: MetricId) -> Result<EvalCurve, EvalError> {
    f1_curve_with(table, metric, &EvalOptions::default())
}

pub fn f1_curve_with(
    table: &ScoreTable,
    metric: MetricId,
    options: &EvalOptions,
) -> Result<EvalCurve, EvalError> {
    let values = retained_sets(table, metric, options)?
        .map(|rows| f1_of(&rows, options.f1))
        .collect();
    Ok(EvalCurve::new(metric, CurveKind::F1, values))
}

/// Both curves for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: MetricId,
    pub accuracy: EvalCurve,
    pub f1: EvalCurve,
}

impl MetricSummary {
    pub fn auac(&self) -> f64 {
        self.accuracy.area
    }

    pub fn aufc(&self) -> f64 {
        self.f1.area
    }
}

pub fn evaluate(
    table: &ScoreTable,
    metrics: &[MetricId],
    options: &EvalOptions,
) -> Result<Vec<MetricSummary>, EvalError> {
    use rayon::prelude::*;
    metrics
        .par_iter()
        .map(|&metric| {
            Ok(MetricSummary {
                metric,
                accuracy: accuracy_curve_with(table, metric, options)?,
                f1: f1_curve_with(table, metric, options)?,
            })
        })
        .collect()
}

pub fn curves_csv(summaries: &[MetricSummary]) -> String {
    let mut out = String::from("metric,kind,percentile,value\n");
    for s in summaries {
        for curve in [&s.accuracy, &s.f1] {
            for (p, v) in curve.points() {
                writeln!(out, "{},{},{p},{v:.6}", s.metric, curve.kind.as_str()).unwrap();
            }
        }
    }
    out
}

pub fn summary_csv(summaries: &[MetricSummary], table: &ScoreTable) -> String {
    let mut out = String::from("metric,auac,aufc,overall_accuracy,m\n");
    for s in summaries {
        writeln!(
            out,
            "{},{:.2},{:.2},{:.6},{}",
            s.metric,
            s.auac(),
            s.aufc(),
            table.overall_accuracy(),
            table.len()
        )
        .unwrap();
    }
    out
}

/// Line chart of one metric's accuracy and F1 curves.
pub fn curve_svg(summary: &MetricSummary) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    let polyline = |curve: &EvalCurve| {
        let n = curve.values.len().max(2) - 1;
        curve
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let x = PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
                let y = H - PAD - (H - 2.0 * PAD) * v;
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<path d="M{PAD},{PAD} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{PAD}" y="20" font-family="sans-serif" font-size="14">{} AUAC {:.2} / AUFC {:.2}</text>"#,
        summary.metric,
        summary.auac(),
        summary.aufc()
    )
    .unwrap();
    writeln!(
        svg,
        r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="middle">percentile</text>"#,
        x = W / 2.0,
        y = H - 10.0
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        polyline(&summary.accuracy)
    )
    .unwrap();
    writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="4 2"/>"##,
        polyline(&summary.f1)
    )
    .unwrap();
    svg.push_str("</svg>\n");
    svg
}

/// Writes `curves.csv`, `summary.csv` and, with `svg`, one `<metric>.svg` per metric.
pub fn emit_curves(
    table: &ScoreTable,
    metrics: &[MetricId],
    out_dir: impl AsRef<Path>,
    options: &EvalOptions,
    svg: bool,
) -> Result<Vec<MetricSummary>, EvalError> {
    let out_dir = out_dir.as_ref();
    let summaries = evaluate(table, metrics, options)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("curves.csv"), curves_csv(&summaries))?;
    fs::write(out_dir.join("summary.csv"), summary_csv(&summaries, table))?;
    if svg {
        for s in &summaries {
            fs::write(out_dir.join(format!("{}.svg", s.metric)), curve_svg(s))?;
        }
    }
    Ok(summaries)
}
