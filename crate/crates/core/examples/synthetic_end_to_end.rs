//! Trains a small MLP on overlapping Gaussian blobs, scores the held-out
//! split with every metric and prints AUAC / AUFC next to a random ranking.
//!
//!     cargo run --release --example synthetic_end_to_end

use std::time::Instant;

use gradtrust::eval::{evaluate, EvalOptions};
use gradtrust::score::{score_bundle, Score, ScoringConfig};
use gradtrust::synth::{export_bundle, gen_blobs, train_mlp, BlobSpec, TrainConfig};
use gradtrust::trust::TrustConfig;
use gradtrust::MetricId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let start = Instant::now();
    let spec = BlobSpec {
        n_classes: 10,
        dim: 32,
        samples_per_class: 2500,
        class_separation: 2.0,
        noise_sigma: 1.0,
        seed: 7,
    };
    let data = gen_blobs(&spec)?;
    let outcome = train_mlp(&data.train, spec.n_classes, &TrainConfig { seed: 7, ..TrainConfig::default() })?;
    let eval = data.eval.as_ref().expect("25000 samples leave a hold-out");
    println!(
        "trained in {:.1?}: train_acc={:.4} eval_acc={:.4}",
        start.elapsed(),
        outcome.train_accuracy,
        outcome.model.accuracy(eval)
    );

    let bundle = export_bundle(&outcome.model, eval);
    let config = ScoringConfig {
        trust: TrustConfig::default().clamped_to(spec.n_classes),
        ..ScoringConfig::default()
    };
    let table = score_bundle(&bundle, &MetricId::ALL, &config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let random: Vec<Score> = (0..table.len()).map(|_| Score::Value(rng.random())).collect();
    let random_auac = evaluate(
        &table.with_column(MetricId::Softmax, random)?,
        &[MetricId::Softmax],
        &EvalOptions::default(),
    )?[0]
        .auac();

    println!("overall accuracy {:.2}, M = {}", 100.0 * table.overall_accuracy(), table.len());
    println!("{:<10} {:>7} {:>7}", "metric", "AUAC", "AUFC");
    for s in evaluate(&table, &MetricId::ALL, &EvalOptions::default())? {
        println!("{:<10} {:>7.2} {:>7.2}", s.metric.as_str(), s.auac(), s.aufc());
    }
    println!("{:<10} {:>7.2}", "random", random_auac);
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
