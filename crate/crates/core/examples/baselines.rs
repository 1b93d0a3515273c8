//! Prints every trust metric for a few hand-picked logit vectors, from a
//! confident prediction to a near tie.
//!
//!     cargo run --example baselines

use gradtrust::baselines::{
    entropy_trust, gradnorm_trust, margin_trust, nll_trust, softmax_confidence,
};
use gradtrust::{gradtrust_score, Vector};

fn main() -> anyhow::Result<()> {
    let features = Vector::new(vec![0.5, 1.5, -1.0, 2.0])?;
    let cases = [
        ("confident", vec![6.0, 0.5, 0.2, -1.0]),
        ("two-way", vec![2.0, 1.8, -0.5, -1.0]),
        ("flat", vec![0.1, 0.0, 0.05, -0.05]),
    ];
    println!(
        "{:<10} {:>8} {:>8} {:>8} {:>8} {:>9} {:>10}",
        "case", "softmax", "entropy", "nll", "margin", "gradnorm", "gradtrust"
    );
    for (name, y) in cases {
        let logits = Vector::new(y)?;
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9.4} {:>10.4}",
            name,
            softmax_confidence(&logits),
            entropy_trust(&logits),
            nll_trust(&logits),
            margin_trust(&logits),
            gradnorm_trust(&features, &logits),
            gradtrust_score(&features, &logits, 2)?,
        );
    }
    Ok(())
}
