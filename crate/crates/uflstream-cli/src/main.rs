//! `uflstream`: generate streams, run the oracle, check hashes, estimate the
//! facility location cost and benchmark the estimators.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commands::Failure;

#[derive(Debug, Parser, Serialize)]
#[command(name = "uflstream", version, about = "Streaming facility location cost estimation")]
struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    #[serde(skip)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Write a generated stream file.
    Gen(GenArgs),
    /// Exact r_p values, the MP facilities and costs of a stream's final set.
    Oracle(OracleArgs),
    /// Check the diameter and consistency of a space partition.
    HashVerify(HashVerifyArgs),
    /// Estimate the facility location cost of a stream.
    Estimate(EstimateArgs),
    /// Run estimators over generated instances and tabulate the ratios.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum Kind {
    Uniform,
    Clustered,
    ExampleHard,
    Bhm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Answer {
    Yes,
    No,
}

/// Instance parameters shared by `gen` and `bench`.
#[derive(Clone, Debug, Args, Serialize)]
struct InstanceArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 1024)]
    delta: u64,
    /// Facility opening cost.
    #[arg(long, default_value_t = 256.0)]
    f: f64,
    /// Cluster count (clustered).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Cluster radius in grid units (clustered); default Δ/100.
    #[arg(long)]
    radius: Option<f64>,
    /// YES or NO instance (bhm).
    #[arg(long, value_enum, default_value_t = Answer::Yes)]
    answer: Answer,
    /// Fraction of inserted points deleted later.
    #[arg(long, default_value_t = 0.0)]
    deletion_rate: f64,
    /// Shuffle the update order.
    #[arg(long)]
    shuffle: bool,
}

#[derive(Debug, Args, Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout if absent.
    #[arg(short, long)]
    output: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct OracleArgs {
    /// Stream file, or `-` for stdin.
    #[arg(long)]
    stream: String,
    /// Also solve the optimum over facilities at input points (n ≤ 24).
    #[arg(long)]
    exact: bool,
    #[arg(short, long)]
    output: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ConstructionArg {
    Grid,
    Face,
    Carve,
}

#[derive(Debug, Args, Serialize)]
struct HashVerifyArgs {
    #[arg(long, value_enum, default_value_t = ConstructionArg::Face)]
    construction: ConstructionArg,
    #[arg(long)]
    d: usize,
    /// Diameter bound.
    #[arg(long, default_value_t = 1.0)]
    ell: f64,
    /// Gap; construction default if absent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AlgoArg {
    TwoPass,
    RandomOrder,
    OnePass,
    Offline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PassArg {
    Both,
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
}

/// Estimator parameters shared by `estimate` and `bench`.
#[derive(Clone, Debug, Args, Serialize)]
struct AlgoParams {
    #[arg(long, value_enum, default_value_t = ConstructionArg::Face)]
    construction: ConstructionArg,
    /// Gap Γ of the hash; a face-hash value below the validity floor is
    /// raised to it with a warning.
    #[arg(long)]
    gamma: Option<f64>,
    /// Samples (two-pass, random-order) or samplers per level (one-pass).
    #[arg(long)]
    m: Option<usize>,
    /// Counters per bucket (one-pass).
    #[arg(long)]
    t: Option<usize>,
    /// Tester threshold (one-pass).
    #[arg(long, default_value_t = 20.0)]
    c: f64,
    /// Fallback sparse recovery capacity (one-pass); 0 disables it.
    #[arg(long, default_value_t = 4096)]
    fallback_k: usize,
    /// Samplers held at once in the first pass.
    #[arg(long, default_value_t = 1024)]
    batch: usize,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Stream file, or `-` for stdin (not for two-pass).
    #[arg(long)]
    stream: String,
    #[command(flatten)]
    params: AlgoParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the report as JSON.
    #[arg(long)]
    json: bool,
    /// Keep the per-sample trace in the report.
    #[arg(long)]
    trace: bool,
    /// Add wall-clock timings to the JSON output.
    #[arg(long)]
    timings: bool,
    /// Where two-pass keeps its first-pass state; default `<stream>.pass1`.
    #[arg(long)]
    sidecar: Option<String>,
    /// Two-pass only: run both passes, or one of them.
    #[arg(long, value_enum, default_value_t = PassArg::Both)]
    pass: PassArg,
    #[arg(short, long)]
    output: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform,clustered")]
    kinds: Vec<Kind>,
    #[arg(long, value_delimiter = ',', default_value = "100,200")]
    n: Vec<usize>,
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "offline,two-pass")]
    algos: Vec<AlgoArg>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[command(flatten)]
    params: AlgoParams,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Add wall-clock timings to the JSON output.
    #[arg(long)]
    timings: bool,
    #[arg(short, long)]
    output: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Unreliable) => {
            eprintln!("error: estimate flagged unreliable");
            ExitCode::from(2)
        }
    }
}
