//! Compares the analytic last-layer gradient with central differences on
//! random instances, then shows the check catching a deliberately broken
//! gradient.
//!
//!     cargo run --example gradcheck

use gradtrust::synth::{gradcheck, GradcheckConfig};

fn main() {
    for inject_bug in [false, true] {
        let config = GradcheckConfig { inject_bug, ..GradcheckConfig::default() };
        let report = gradcheck(&config);
        println!(
            "inject_bug={inject_bug}: {} instances, {} entries, max_rel_err {:.3e}, passed={}",
            report.instances, report.entries, report.max_rel_err, report.passed
        );
        if !report.passed {
            let w = report.worst;
            println!("  worst entry: seed={} i={} j={} rel_err={:.3e}", w.seed, w.row, w.col, w.rel_err);
        }
    }
}
