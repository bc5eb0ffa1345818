use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use spanconf::confidence::{AggSpanMode, Method};
use spanconf::pipeline::{self, SpanQuery, DEFAULT_B, DEFAULT_BINS, DEFAULT_K};
use spanconf::Result;

/// Span-level confidence estimation and calibration for BIO sequence labeling.
#[derive(Parser)]
#[command(name = "spanconf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic corpus from a reference HMM.
    Synth(SynthArgs),
    /// Beam-decode a gold file with a reference model.
    Decode(DecodeArgs),
    /// Score the top-1 spans of each prediction.
    Estimate(EstimateArgs),
    /// Compute ECE and reliability tables for scored spans.
    Evaluate(EvaluateArgs),
    /// Exact span marginals under a reference model.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct Workers {
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in model: ambiguous-loc or tiny.
    #[arg(
        long,
        conflicts_with = "model_spec",
        required_unless_present = "model_spec"
    )]
    preset: Option<String>,
    /// Model JSON file to sample from instead of a preset.
    #[arg(long)]
    model_spec: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    #[arg(long, default_value_t = 500)]
    validation: usize,
    #[arg(long, default_value_t = 1000)]
    test: usize,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Softmax temperature applied to the model's next-tag distribution.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Keep every tag sequence in the beam.
    #[arg(long)]
    exhaustive: bool,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Gold or input file supplying the words of each example.
    #[arg(long)]
    gold: PathBuf,
    /// Reference model; needed for AggSpan rescoring.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Label set JSON; defaults to the model's labels.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Span, AggSpan, AggSeq or AdaAggSeq; repeatable.
    #[arg(long = "method", required = true)]
    methods: Vec<Method>,
    /// Beam cut-off; defaults to 5, or 10 for AdaAggSeq.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: usize,
    #[arg(long, default_value_t = AggSpanMode::Rescoring)]
    aggspan_mode: AggSpanMode,
    /// Temperature for the rescoring model; match the one used to decode.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
    /// Write exclusion counts here for `evaluate --diagnostics`.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    workers: Workers,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Scored-spans file; repeat once per seed.
    #[arg(long = "scored", required = true)]
    scored: Vec<PathBuf>,
    /// Estimate diagnostics, one per scored file.
    #[arg(long = "diagnostics")]
    diagnostics: Vec<PathBuf>,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Fail instead of omitting ECE_NO when no non-O span remains.
    #[arg(long)]
    require_no: bool,
    #[arg(long)]
    out: PathBuf,
    /// Directory for reliability-table CSVs.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Scored spans with `correct` filled in (single run only).
    #[arg(long)]
    annotated_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Take spans from the top-1 candidates of this predictions file.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// ID:START:END:LABEL; repeatable.
    #[arg(long = "span")]
    spans: Vec<SpanQuery>,
    /// Cross-check against full enumeration.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    workers: Workers,
}

fn print<T: Serialize>(summary: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summaries serialize");
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => print(&pipeline::run_synth(&pipeline::SynthConfig {
            preset: a.preset,
            model_spec: a.model_spec,
            out_dir: a.out_dir,
            train: a.train,
            validation: a.validation,
            test: a.test,
            min_len: a.min_len,
            max_len: a.max_len,
            seed: a.seed,
        })?),
        Command::Decode(a) => print(&pipeline::run_decode(&pipeline::DecodeConfig {
            model: a.model,
            gold: a.gold,
            out: a.out,
            k: a.k,
            tau: a.tau,
            exhaustive: a.exhaustive,
            workers: a.workers.workers,
        })?),
        Command::Estimate(a) => print(&pipeline::run_estimate(&pipeline::EstimateConfig {
            predictions: a.predictions,
            gold: a.gold,
            model: a.model,
            labels: a.labels,
            methods: a.methods,
            k: a.k,
            b: a.b,
            aggspan_mode: a.aggspan_mode,
            tau: a.tau,
            workers: a.workers.workers,
            out: a.out,
            diagnostics: a.diagnostics,
        })?),
        Command::Evaluate(a) => {
            let report = pipeline::run_evaluate(&pipeline::EvaluateConfig {
                scored: a.scored,
                diagnostics: a.diagnostics,
                gold: a.gold,
                labels: a.labels,
                model: a.model,
                bins: a.bins,
                require_no: a.require_no,
                out: a.out,
                csv_dir: a.csv_dir,
                annotated_out: a.annotated_out,
            })?;
            print(&report.summary)
        }
        Command::Oracle(a) => print(&pipeline::run_oracle(&pipeline::OracleConfig {
            model: a.model,
            gold: a.gold,
            predictions: a.predictions,
            spans: a.spans,
            exhaustive: a.exhaustive,
            workers: a.workers.workers,
            out: a.out,
        })?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
