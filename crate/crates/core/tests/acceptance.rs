//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails.
//!
//!     cargo test -p gradtrust --test acceptance

mod common;

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::{brute_gradtrust, brute_macro_f1, random_instance, rel_close, rng};
use gradtrust::bundle::{decode_bundle, encode_bundle, FloatStorage};
use gradtrust::eval::{accuracy_curve, curves_csv, evaluate, f1_curve, EvalOptions};
use gradtrust::score::{score_bundle, Score, ScoreRow, ScoringConfig};
use gradtrust::synth::{export_bundle, gen_blobs, gradcheck, train_mlp, BlobSpec, GradcheckConfig, TrainConfig};
use gradtrust::tensor::population_variance;
use gradtrust::trust::{gradient_report, gradtrust_score_with, TrustConfig};
use gradtrust::{
    read_bundle, write_bundle, BundleError, LastLayerBundle, Matrix, MetricId, ScoreTable, TrustError, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, detail: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(detail.into())
    }
}

fn v(data: &[f64]) -> Vector {
    Vector::new(data.to_vec()).unwrap()
}

fn gradient_oracle() -> Check {
    let start = Instant::now();
    let report = gradcheck(&GradcheckConfig::default());
    let elapsed = start.elapsed();
    ensure(report.instances >= 100, format!("only {} instances", report.instances))?;
    ensure(
        report.passed && report.max_rel_err < 1e-4,
        format!("max_rel_err {:.3e}", report.max_rel_err),
    )?;
    ensure(elapsed < Duration::from_secs(10), format!("took {elapsed:.2?}"))?;

    let cli = Command::new(env!("CARGO_BIN_EXE_gradtrust"))
        .args(["gradcheck", "--instances", "100", "--h", "1e-4"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(cli.status.success(), "gradcheck command failed")?;
    Ok(format!(
        "{} instances, {} entries, max_rel_err {:.2e}, {:.2?}",
        report.instances, report.entries, report.max_rel_err, elapsed
    ))
}

fn factorization() -> Check {
    let mut rng = rng(11);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let (f, y, k) = random_instance(&mut rng);
        let report = match gradient_report(&v(&f), &v(&y), &TrustConfig::with_k(k)) {
            Ok(r) => r,
            Err(TrustError::DegenerateScore) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
        let var_ff = population_variance(&v(&sq));
        for j in 0..y.len() {
            let expected = report.residual_grad[j].powi(4) * var_ff;
            let got = report.variance[j];
            ensure(rel_close(got, expected, 1e-9), format!("v[{j}] = {got} vs {expected}"))?;
            if expected != 0.0 {
                worst = worst.max((got - expected).abs() / expected.abs());
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} instances, worst relative gap {worst:.2e}"))
}

fn worked_example() -> Check {
    let (f, y) = ([1.0, 2.0], [3.0, 1.0, 2.0, 0.5]);
    let brute = brute_gradtrust(&f, &y, 2, None);
    ensure(brute.targets == [0.0, 1.0, 1.0, 0.0], "brute targets")?;
    ensure(brute.dj_dy == [6.0, 0.0, 2.0, 1.0], "brute dJ/dy")?;
    ensure(brute.variance == [2916.0, 0.0, 36.0, 2.25], "brute variance")?;
    ensure(brute.score == Some(162.0), "brute score")?;

    let report = gradient_report(&v(&f), &v(&y), &TrustConfig::with_k(2)).map_err(|e| e.to_string())?;
    ensure(report.plan.targets.as_slice() == brute.targets, "library targets")?;
    ensure(report.residual_grad.as_slice() == brute.dj_dy, "library dJ/dy")?;
    ensure(report.variance.as_slice() == brute.variance, "library variance")?;
    ensure(report.score == 162.0, format!("library score {}", report.score))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = dir.path().join("worked.gtpk");
    let out = dir.path().join("worked.csv");
    let bundle = LastLayerBundle {
        features: Matrix::new(1, 2, f.to_vec()).unwrap(),
        weights: Matrix::zeros(2, 4).unwrap(),
        bias: v(&y),
        labels: vec![0],
        logits: None,
        meta: BTreeMap::new(),
    };
    write_bundle(&bundle, &input).map_err(|e| e.to_string())?;
    let run = Command::new(env!("CARGO_BIN_EXE_gradtrust"))
        .args(["score", "--k", "2", "--metrics", "gradtrust", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(run.status.success(), "score command failed")?;
    let table = ScoreTable::read_csv_file(&out).map_err(|e| e.to_string())?;
    let cli_score = table.column(MetricId::Gradtrust).map_err(|e| e.to_string())?[0];
    ensure(cli_score == Score::Value(162.0), format!("score command wrote {cli_score:?}"))?;
    Ok("brute force, library and score command all give r = 162".into())
}

fn same_score(a: Result<f64, TrustError>, b: Result<f64, TrustError>) -> Result<(), String> {
    match (a, b) {
        (Ok(x), Ok(y)) => ensure(rel_close(x, y, 1e-9), format!("{x} vs {y}")),
        (Err(x), Err(y)) if x == y => Ok(()),
        (x, y) => Err(format!("{x:?} vs {y:?}")),
    }
}

fn random_features(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let f: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sq: Vec<f64> = f.iter().map(|x| x * x).collect();
        if population_variance(&v(&sq)) > 1e-9 {
            return f;
        }
    }
}

fn random_table(rng: &mut ChaCha8Rng, m: usize) -> ScoreTable {
    let rows = (0..m)
        .map(|i| {
            let label = rng.random_range(0..5);
            let prediction = if rng.random_bool(0.6) { label } else { rng.random_range(0..5) };
            ScoreRow {
                sample_id: i as u64,
                label,
                prediction,
                correct: label == prediction,
                scores: vec![
                    Score::Value((rng.random_range(0..40) as f64) / 8.0),
                    if rng.random_bool(0.05) { Score::Degenerate } else { Score::Value(rng.random_range(0.0..10.0)) },
                ],
            }
        })
        .collect();
    ScoreTable::new(vec![MetricId::Softmax, MetricId::Gradtrust], rows).unwrap()
}

fn invariance() -> Check {
    let mut rng = rng(23);
    for _ in 0..1000 {
        let (f, y, k) = random_instance(&mut rng);
        let alpha = 10f64.powf(rng.random_range(-3.0..3.0));
        let base = TrustConfig::with_k(k);
        let scaled = TrustConfig { loss_normalizer: Some(alpha), ..base };
        same_score(
            gradtrust_score_with(&v(&f), &v(&y), &base),
            gradtrust_score_with(&v(&f), &v(&y), &scaled),
        )
        .map_err(|e| format!("normalizer {alpha}: {e}"))?;
    }
    for _ in 0..1000 {
        let (_, y, k) = random_instance(&mut rng);
        let d1 = rng.random_range(2..=16);
        let d2 = rng.random_range(2..=16);
        let f = random_features(&mut rng, d1);
        let g = random_features(&mut rng, d2);
        let config = TrustConfig::with_k(k);
        same_score(gradtrust_score_with(&v(&f), &v(&y), &config), gradtrust_score_with(&v(&g), &v(&y), &config))
            .map_err(|e| format!("feature substitution: {e}"))?;
    }

    let options = EvalOptions::default();
    for trial in 0..20 {
        let m = rng.random_range(5..400);
        let table = random_table(&mut rng, m);
        let metrics = table.metrics().to_vec();
        let base = curves_csv(&evaluate(&table, &metrics, &options).map_err(|e| e.to_string())?);
        let transforms: [fn(f64) -> f64; 3] = [|x| x.exp(), |x| 5.0 * x - 2.0, |x| x.cbrt()];
        for t in transforms {
            let mapped = table
                .map_metric(MetricId::Softmax, t)
                .and_then(|tb| tb.map_metric(MetricId::Gradtrust, t))
                .map_err(|e| e.to_string())?;
            let csv = curves_csv(&evaluate(&mapped, &metrics, &options).map_err(|e| e.to_string())?);
            ensure(csv == base, format!("trial {trial}: transform changed curves"))?;
        }
        let mut rows = table.rows().to_vec();
        for i in (1..rows.len()).rev() {
            rows.swap(i, rng.random_range(0..=i));
        }
        let shuffled = ScoreTable::new(metrics.clone(), rows).map_err(|e| e.to_string())?;
        let csv = curves_csv(&evaluate(&shuffled, &metrics, &options).map_err(|e| e.to_string())?);
        ensure(csv == base, format!("trial {trial}: permutation changed curves"))?;
    }
    Ok("1000 normalizer + 1000 substitution trials at 1e-9; 20 tables bit-identical under 3 transforms and a shuffle".into())
}

fn table(rows: &[(usize, usize, f64)]) -> ScoreTable {
    ScoreTable::new(
        vec![MetricId::Softmax],
        rows.iter()
            .enumerate()
            .map(|(i, &(label, prediction, s))| ScoreRow {
                sample_id: i as u64,
                label,
                prediction,
                correct: label == prediction,
                scores: vec![Score::Value(s)],
            })
            .collect(),
    )
    .unwrap()
}

fn eval_oracle() -> Check {
    let auac = |rows: &[(usize, usize, f64)]| {
        accuracy_curve(&table(rows), MetricId::Softmax).map(|c| format!("{:.2}", c.area))
    };
    let two = auac(&[(0, 0, 1.0), (1, 0, 0.0)]).map_err(|e| e.to_string())?;
    ensure(two == "75.00", format!("M=2 gives {two}"))?;
    let all = auac(&[(0, 0, 0.3), (1, 1, 0.9), (2, 2, 0.1)]).map_err(|e| e.to_string())?;
    ensure(all == "100.00", format!("all correct gives {all}"))?;
    let none = auac(&[(0, 1, 0.3), (1, 2, 0.9), (2, 0, 0.1)]).map_err(|e| e.to_string())?;
    ensure(none == "0.00", format!("all wrong gives {none}"))?;

    let rows = [(0, 0, 0.9), (1, 0, 0.7), (1, 1, 0.4), (2, 1, 0.2)];
    let curve = f1_curve(&table(&rows), MetricId::Softmax).map_err(|e| e.to_string())?;
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| a.2.total_cmp(&b.2));
    for p in 1..=100 {
        // nearest rank: the ceil(p·M/100)-th smallest score
        let rank = (p * rows.len()).div_ceil(100);
        let threshold = sorted[rank - 1].2;
        let retained: Vec<(usize, usize)> =
            rows.iter().filter(|r| r.2 >= threshold).map(|r| (r.0, r.1)).collect();
        let expected = brute_macro_f1(&retained);
        let got = curve.values[p - 1];
        ensure((got - expected).abs() < 1e-12, format!("F1 bin {p}: {got} vs {expected}"))?;
    }
    Ok(format!("75.00 / 100.00 / 0.00; 100 macro-F1 bins match (AUFC {:.2})", curve.area))
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let spec = BlobSpec {
        n_classes: 10,
        dim: 32,
        samples_per_class: 2500,
        class_separation: 2.0,
        noise_sigma: 1.0,
        seed: 7,
    };
    let data = gen_blobs(&spec).map_err(|e| e.to_string())?;
    let outcome = train_mlp(&data.train, spec.n_classes, &TrainConfig { seed: 7, ..TrainConfig::default() })
        .map_err(|e| e.to_string())?;
    let eval = data.eval.as_ref().ok_or("no eval split")?;
    ensure(eval.len() >= 5000, format!("only {} eval samples", eval.len()))?;
    let bundle = export_bundle(&outcome.model, eval);
    let config = ScoringConfig {
        trust: TrustConfig::default().clamped_to(spec.n_classes),
        ..ScoringConfig::default()
    };
    let table = score_bundle(&bundle, &MetricId::ALL, &config).map_err(|e| e.to_string())?;
    let options = EvalOptions::default();
    let summaries = evaluate(&table, &MetricId::ALL, &options).map_err(|e| e.to_string())?;
    let auac = |m: MetricId| summaries.iter().find(|s| s.metric == m).unwrap().auac();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let random: Vec<Score> = (0..table.len()).map(|_| Score::Value(rng.random())).collect();
    let with_random = table.with_column(MetricId::Softmax, random).map_err(|e| e.to_string())?;
    let random_auac = evaluate(&with_random, &[MetricId::Softmax], &options).map_err(|e| e.to_string())?[0].auac();
    let elapsed = start.elapsed();

    let accuracy = 100.0 * table.overall_accuracy();
    let (gt, sm, nll) = (auac(MetricId::Gradtrust), auac(MetricId::Softmax), auac(MetricId::Nll));
    let detail = format!(
        "M={} acc {accuracy:.2}, gradtrust {gt:.2}, softmax {sm:.2}, nll {nll:.2}, random {random_auac:.2}, {elapsed:.1?}",
        table.len()
    );
    ensure(elapsed < Duration::from_secs(60), format!("too slow: {detail}"))?;
    ensure(gt >= accuracy + 2.0, format!("gradtrust below accuracy + 2: {detail}"))?;
    ensure(gt >= random_auac + 5.0, format!("gradtrust below random + 5: {detail}"))?;
    ensure(sm >= random_auac + 5.0, format!("softmax below random + 5: {detail}"))?;
    ensure(nll >= random_auac + 5.0, format!("nll below random + 5: {detail}"))?;
    Ok(detail)
}

fn format_checks() -> Check {
    let bundle = LastLayerBundle {
        features: Matrix::new(3, 2, vec![0.5, -1.25, 3.0, 0.1f32 as f64, -7.75, 1e-3f32 as f64]).unwrap(),
        weights: Matrix::new(2, 3, vec![1.0, -2.0, 0.25, 0.5, 0.0, -0.125]).unwrap(),
        bias: v(&[0.1f32 as f64, 0.0, -0.3f32 as f64]),
        labels: vec![0, 2, 1],
        logits: Some(Matrix::new(3, 3, (0..9).map(|i| i as f64 * 0.5 - 2.0).collect()).unwrap()),
        meta: BTreeMap::from([("model".to_owned(), "fixture".to_owned())]),
    };
    let bytes = encode_bundle(&bundle, FloatStorage::F32).map_err(|e| e.to_string())?;
    let back = decode_bundle(&bytes).map_err(|e| e.to_string())?;
    ensure(back == bundle, "round trip changed the bundle")?;
    ensure(encode_bundle(&back, FloatStorage::F32).map_err(|e| e.to_string())? == bytes, "re-encoding differs")?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("fixture.gtpk");
    write_bundle(&bundle, &path).map_err(|e| e.to_string())?;
    ensure(read_bundle(&path).map_err(|e| e.to_string())? == bundle, "file round trip")?;

    let mut bad_magic = bytes.clone();
    bad_magic[..4].copy_from_slice(b"GTPX");
    let err = decode_bundle(&bad_magic);
    ensure(matches!(err, Err(BundleError::BadMagic { .. })), format!("corrupted magic gave {err:?}"))?;
    for cut in [bytes.len() - 1, bytes.len() / 2, 14] {
        let err = decode_bundle(&bytes[..cut]);
        ensure(
            matches!(err, Err(BundleError::Truncated { .. })),
            format!("truncated at {cut} gave {err:?}"),
        )?;
    }
    Ok(format!("{} bytes round-trip bit-exact; BadMagic and Truncated raised", bytes.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("gradient oracle", gradient_oracle),
        ("closed-form factorization", factorization),
        ("worked-example chain", worked_example),
        ("invariance suite", invariance),
        ("eval oracle", eval_oracle),
        ("end-to-end synthetic", end_to_end),
        ("GTPK format", format_checks),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
