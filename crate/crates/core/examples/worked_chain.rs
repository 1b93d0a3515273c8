//! Walks one sample through every intermediate of the GradTrust score.
//!
//!     cargo run --example worked_chain

use gradtrust::trust::{gradient_report, TrustConfig};
use gradtrust::Vector;

fn main() -> anyhow::Result<()> {
    let features = Vector::new(vec![1.0, 2.0])?;
    let logits = Vector::new(vec![3.0, 1.0, 2.0, 0.5])?;
    let report = gradient_report(&features, &logits, &TrustConfig::with_k(2))?;

    println!("logits          {logits}");
    println!("predicted       {}", report.plan.predicted);
    println!("counterfactuals {:?}", report.plan.counterfactuals);
    println!("targets         {}", report.plan.targets);
    println!("dJ/dy           {}", report.residual_grad);
    println!("gradient (d x N)");
    for i in 0..report.grad.rows() {
        println!("  {}", report.grad.row_vector(i));
    }
    println!("column variance {}", report.variance);
    println!("argmax variance {}", report.argmax);
    println!("score           {}", report.score);
    Ok(())
}
