//! Builds a score table by hand, evaluates it and writes curves, summary and
//! SVG charts to a temporary directory.
//!
//!     cargo run --example eval_curves

use gradtrust::eval::{emit_curves, EvalOptions};
use gradtrust::score::{Score, ScoreRow};
use gradtrust::{MetricId, ScoreTable};

fn main() -> anyhow::Result<()> {
    // (label, prediction, softmax, gradtrust)
    let data = [
        (0, 0, 0.95, Score::Value(40.0)),
        (1, 1, 0.90, Score::Value(12.0)),
        (2, 1, 0.55, Score::Value(3.0)),
        (1, 1, 0.80, Score::Value(25.0)),
        (0, 2, 0.40, Score::Value(1.5)),
        (2, 2, 0.60, Score::Degenerate),
        (0, 0, 0.70, Score::Value(f64::INFINITY)),
        (1, 0, 0.65, Score::Value(2.0)),
    ];
    let rows = data
        .iter()
        .enumerate()
        .map(|(i, &(label, prediction, softmax, trust))| ScoreRow {
            sample_id: i as u64,
            label,
            prediction,
            correct: label == prediction,
            scores: vec![Score::Value(softmax), trust],
        })
        .collect();
    let table = ScoreTable::new(vec![MetricId::Softmax, MetricId::Gradtrust], rows)?;

    let dir = tempfile::tempdir()?;
    let summaries = emit_curves(&table, table.metrics(), dir.path(), &EvalOptions::default(), true)?;
    println!("overall accuracy {:.2}", 100.0 * table.overall_accuracy());
    for s in &summaries {
        println!("{:<10} AUAC {:>6.2}  AUFC {:>6.2}", s.metric.as_str(), s.auac(), s.aufc());
    }
    for entry in std::fs::read_dir(dir.path())? {
        let entry = entry?;
        println!("  {} ({} bytes)", entry.file_name().to_string_lossy(), entry.metadata()?.len());
    }
    Ok(())
}
