//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 input error, 3 configuration error, 4 training
//! divergence, 5 gradient check failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{MarginMode, MetricId};
use crate::bundle::{read_bundle, validation_warnings, write_bundle_with, FloatStorage, LastLayerBundle};
use crate::error::{EvalError, SynthError, TrustError};
use crate::eval::{emit_curves, EvalOptions, F1Average, MetricSummary, DEFAULT_BINS};
use crate::score::{score_bundle, DegeneratePolicy, ScoreTable, ScoringConfig};
use crate::synth::{export_bundle, gen_blobs, gradcheck, train_mlp, BlobSpec, GradcheckConfig, TrainConfig};
use crate::trust::{DenominatorMode, TrustConfig, VarianceMode, DEFAULT_K};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_GRADCHECK: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "gradtrust", version, about = "Prediction trust from counterfactual last-layer gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every sample of a GTPK bundle and write a score CSV.
    Score(ScoreArgs),
    /// Build accuracy/F1 curves and their areas from a score CSV.
    Eval(EvalArgs),
    /// Generate blobs, train a small MLP and export its last layer as GTPK.
    Synth(SynthArgs),
    /// Compare the analytic last-layer gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Score a bundle and evaluate it in one go.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    Squared,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    Counterfactuals,
    AllRemaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginArg {
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DegenerateArg {
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum F1Arg {
    Macro,
    Micro,
}

#[derive(Debug, Clone, Args)]
pub struct ScoringFlags {
    /// Counterfactual classes; defaults to 10, capped at N-1 when not given.
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated metrics (default: all).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "squared")]
    pub variance_mode: VarianceArg,
    #[arg(long, value_enum, default_value = "counterfactuals")]
    pub denominator_mode: DenominatorArg,
    #[arg(long, value_enum, default_value = "probability")]
    pub margin_mode: MarginArg,
}

#[derive(Debug, Clone, Args)]
pub struct EvalFlags {
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_enum, default_value = "bottom")]
    pub degenerate_policy: DegenerateArg,
    #[arg(long, value_enum, default_value = "macro")]
    pub f1_average: F1Arg,
    /// Also write one SVG chart per metric.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringFlags,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Score CSV produced by `score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Directory receiving curves.csv and summary.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Comma-separated metrics (default: every metric column in the file).
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 500)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    /// Store tensors as f64 instead of f32.
    #[arg(long)]
    pub f64: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Corrupt the analytic gradient; the check must then fail.
    #[arg(long, hide = true)]
    pub inject_bug: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub scoring: ScoringFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
}

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }

    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::input(e)
    }
}

impl From<TrustError> for Failure {
    fn from(e: TrustError) -> Self {
        match e {
            TrustError::InvalidK { k, n_classes } => Failure::config(format!(
                "invalid k = {k}: need 1 <= k <= N-1 = {}",
                n_classes.saturating_sub(1)
            )),
            other => Failure::input(other),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn parse_metrics(names: &Option<Vec<String>>, code: i32) -> Result<Option<Vec<MetricId>>, Failure> {
    names
        .as_ref()
        .map(|names| {
            names
                .iter()
                .map(|n| n.trim().parse::<MetricId>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|message| Failure { code, message })
        })
        .transpose()
}

fn scoring_config(flags: &ScoringFlags, n_classes: usize) -> ScoringConfig {
    let trust = match flags.k {
        Some(k) => TrustConfig::with_k(k),
        None => TrustConfig::with_k(DEFAULT_K).clamped_to(n_classes),
    };
    ScoringConfig {
        trust: TrustConfig {
            variance: match flags.variance_mode {
                VarianceArg::Squared => VarianceMode::Squared,
                VarianceArg::Raw => VarianceMode::Raw,
            },
            denominator: match flags.denominator_mode {
                DenominatorArg::Counterfactuals => DenominatorMode::Counterfactuals,
                DenominatorArg::AllRemaining => DenominatorMode::AllRemaining,
            },
            ..trust
        },
        margin: match flags.margin_mode {
            MarginArg::Probability => MarginMode::Probability,
            MarginArg::Logit => MarginMode::Logit,
        },
    }
}

fn eval_options(flags: &EvalFlags) -> Result<EvalOptions, Failure> {
    if flags.bins == 0 {
        return Err(Failure::config("--bins must be at least 1"));
    }
    Ok(EvalOptions {
        bins: flags.bins,
        degenerate: match flags.degenerate_policy {
            DegenerateArg::Bottom => DegeneratePolicy::Bottom,
            DegenerateArg::Top => DegeneratePolicy::Top,
        },
        f1: match flags.f1_average {
            F1Arg::Macro => F1Average::Macro,
            F1Arg::Micro => F1Average::Micro,
        },
    })
}

fn load_bundle(path: &PathBuf, err: &mut dyn Write) -> Result<LastLayerBundle, Failure> {
    let bundle = read_bundle(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    for warning in validation_warnings(&bundle) {
        let _ = writeln!(err, "warning: {warning}");
    }
    Ok(bundle)
}

fn score_to_table(
    input: &PathBuf,
    flags: &ScoringFlags,
    err: &mut dyn Write,
) -> Result<ScoreTable, Failure> {
    let metrics = parse_metrics(&flags.metrics, EXIT_CONFIG)?.unwrap_or_else(|| MetricId::ALL.to_vec());
    let bundle = load_bundle(input, err)?;
    let config = scoring_config(flags, bundle.n_classes());
    let table = score_bundle(&bundle, &metrics, &config)?;
    if metrics.contains(&MetricId::Gradtrust) {
        let degenerate = table.degenerate_count(MetricId::Gradtrust)?;
        if degenerate > 0 {
            let _ = writeln!(
                err,
                "warning: {degenerate} sample(s) have a degenerate gradtrust score (all gradient variances zero)"
            );
        }
    }
    Ok(table)
}

fn print_summaries(summaries: &[MetricSummary], out: &mut dyn Write) {
    for s in summaries {
        let _ = writeln!(out, "{}\tAUAC {:.2}\tAUFC {:.2}", s.metric, s.auac(), s.aufc());
    }
}

pub fn run_score(args: &ScoreArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let table = score_to_table(&args.input, &args.scoring, err)?;
    table.write_csv_file(&args.out)?;
    let _ = writeln!(out, "wrote {} rows to {}", table.len(), args.out.display());
    Ok(())
}

pub fn run_eval(args: &EvalArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    let options = eval_options(&args.eval)?;
    let table = ScoreTable::read_csv_file(&args.scores)
        .map_err(|e| Failure::input(format!("{}: {e}", args.scores.display())))?;
    let metrics = parse_metrics(&args.metrics, EXIT_INPUT)?.unwrap_or_else(|| table.metrics().to_vec());
    for m in &metrics {
        table.metric_index(*m)?;
    }
    let summaries = emit_curves(&table, &metrics, &args.out_dir, &options, args.eval.svg)?;
    print_summaries(&summaries, out);
    Ok(())
}

pub fn run_report(args: &ReportArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let options = eval_options(&args.eval)?;
    let table = score_to_table(&args.input, &args.scoring, err)?;
    std::fs::create_dir_all(&args.out_dir).map_err(Failure::input)?;
    table.write_csv_file(args.out_dir.join("scores.csv"))?;
    let metrics = table.metrics().to_vec();
    let summaries = emit_curves(&table, &metrics, &args.out_dir, &options, args.eval.svg)?;
    print_summaries(&summaries, out);
    Ok(())
}

pub fn run_synth(args: &SynthArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    let spec = BlobSpec {
        n_classes: args.classes,
        dim: args.dim,
        samples_per_class: args.samples_per_class,
        class_separation: args.separation,
        noise_sigma: args.sigma,
        seed: args.seed,
    };
    let data = gen_blobs(&spec).map_err(Failure::config)?;
    if args.classes < 2 {
        return Err(Failure::config("--classes must be at least 2"));
    }
    if args.hidden == 0 {
        return Err(Failure::config("--hidden must be at least 1"));
    }
    let train = TrainConfig {
        hidden: args.hidden,
        lr: args.lr,
        epochs: args.epochs,
        seed: args.seed,
    };
    let outcome = train_mlp(&data.train, data.n_classes, &train).map_err(|e| match e {
        SynthError::TrainingDiverged { .. } => Failure {
            code: EXIT_DIVERGED,
            message: e.to_string(),
        },
        other => Failure::config(other),
    })?;
    let eval_split = data.eval.as_ref().unwrap_or(&data.train);
    let eval_acc = outcome.model.accuracy(eval_split);
    let mut bundle = export_bundle(&outcome.model, eval_split);
    bundle.meta.insert(
        "blobs".into(),
        format!(
            "classes={} dim={} samples_per_class={} separation={} sigma={} seed={}",
            spec.n_classes, spec.dim, spec.samples_per_class, spec.class_separation, spec.noise_sigma, spec.seed
        ),
    );
    bundle.meta.insert(
        "training".into(),
        format!("hidden={} lr={} epochs={}", train.hidden, train.lr, train.epochs),
    );
    let storage = if args.f64 { FloatStorage::F64 } else { FloatStorage::F32 };
    write_bundle_with(&bundle, &args.out, storage).map_err(Failure::input)?;
    let _ = writeln!(
        out,
        "train_acc={:.4} eval_acc={:.4} m={} out={}",
        outcome.train_accuracy,
        eval_acc,
        bundle.n_samples(),
        args.out.display()
    );
    Ok(())
}

pub fn run_gradcheck(args: &GradcheckArgs, out: &mut dyn Write, _err: &mut dyn Write) -> CmdResult {
    if args.instances == 0 || args.h.is_nan() || args.h <= 0.0 {
        return Err(Failure::config("need --instances >= 1 and --h > 0"));
    }
    let config = GradcheckConfig {
        instances: args.instances,
        seed: args.seed,
        h: args.h,
        inject_bug: args.inject_bug,
        ..GradcheckConfig::default()
    };
    let report = gradcheck(&config);
    let _ = writeln!(
        out,
        "instances={} entries={} max_rel_err={:.3e} tolerance={:e}",
        report.instances, report.entries, report.max_rel_err, config.tolerance
    );
    if report.passed {
        let _ = writeln!(out, "gradcheck: ok");
        Ok(())
    } else {
        let w = report.worst;
        Err(Failure {
            code: EXIT_GRADCHECK,
            message: format!(
                "gradcheck failed: worst entry seed={} i={} j={} rel_err={:.3e}",
                w.seed, w.row, w.col, w.rel_err
            ),
        })
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_INPUT;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Score(a) => run_score(a, out, err),
        Command::Eval(a) => run_eval(a, out, err),
        Command::Synth(a) => run_synth(a, out, err),
        Command::Gradcheck(a) => run_gradcheck(a, out, err),
        Command::Report(a) => run_report(a, out, err),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
