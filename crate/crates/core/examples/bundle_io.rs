//! Builds a small last-layer bundle, writes it as GTPK, reads it back and
//! reports what the validator thinks of it.
//!
//!     cargo run --example bundle_io

use std::collections::BTreeMap;

use gradtrust::bundle::{logit_consistency, validation_warnings};
use gradtrust::{ensure_logits, read_bundle, validate_bundle, write_bundle, LastLayerBundle, Matrix, Vector};

fn main() -> anyhow::Result<()> {
    let bundle = LastLayerBundle {
        features: Matrix::new(3, 2, vec![0.5, 1.0, -1.0, 2.0, 1.5, -0.5])?,
        weights: Matrix::new(2, 3, vec![1.0, -1.0, 0.5, 0.25, 0.75, -0.5])?,
        bias: Vector::new(vec![0.0, 0.1, -0.1])?,
        labels: vec![0, 1, 2],
        logits: None,
        meta: BTreeMap::from([("model".into(), "toy".into())]),
    };
    let bundle = ensure_logits(bundle);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("toy.gtpk");
    write_bundle(&bundle, &path)?;
    println!("wrote {} bytes", std::fs::metadata(&path)?.len());

    let back = read_bundle(&path)?;
    println!(
        "read M={} d={} N={} meta={:?}",
        back.n_samples(),
        back.feature_dim(),
        back.n_classes(),
        back.meta
    );
    println!("violations: {}", validate_bundle(&back).len());
    println!("max |stored - recomputed| logit: {:?}", logit_consistency(&back));
    for warning in validation_warnings(&back) {
        println!("warning: {warning}");
    }

    let mut broken = back.clone();
    broken.labels[1] = 7;
    for violation in validate_bundle(&broken) {
        println!("violation: {violation}");
    }
    Ok(())
}
