//! Trust scores for classifier predictions from counterfactual last-layer
//! gradients, the usual confidence baselines, and a percentile-binned
//! evaluation harness (AUAC / AUFC).
//!
//! Everything works from the penultimate features and the final linear layer
//! of a trained classifier, exchanged as GTPK bundles (see [`bundle`]).
//!
//! ```
//! use gradtrust::tensor::Vector;
//! use gradtrust::trust::gradtrust_score;
//!
//! let features = Vector::new(vec![1.0, 2.0]).unwrap();
//! let logits = Vector::new(vec![3.0, 1.0, 2.0, 0.5]).unwrap();
//! assert_eq!(gradtrust_score(&features, &logits, 2).unwrap(), 162.0);
//! ```

pub mod baselines;
pub mod bundle;
pub mod cli;
pub mod error;
pub mod eval;
pub mod score;
pub mod synth;
pub mod tensor;
pub mod trust;

pub use baselines::MetricId;
pub use bundle::{ensure_logits, read_bundle, validate_bundle, write_bundle, LastLayerBundle};
pub use error::{BundleError, EvalError, SynthError, TensorError, TrustError};
pub use eval::{accuracy_curve, f1_curve, EvalCurve, EvalOptions};
pub use score::{score_bundle, Score, ScoreTable, ScoringConfig};
pub use tensor::{Matrix, Vector};
pub use trust::{gradtrust_score, TrustConfig};
