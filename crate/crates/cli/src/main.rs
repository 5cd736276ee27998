use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdsp::embed::Transform;
use xdsp::evaluator::{DEFAULT_RATES, DEFAULT_REPEATS};

mod commands;
mod manifest;

/// Cross-domain semantic parsing by ranking canonical utterances.
#[derive(Parser)]
#[command(name = "xdsp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split every domain and write size and vocabulary-overlap statistics.
    Prepare(PrepareArgs),
    /// Statistics of an embedding matrix under each requested transform.
    EmbedStats(EmbedStatsArgs),
    /// Train a model on one domain, or on several merged.
    Train(TrainArgs),
    /// Fine-tune a trained checkpoint on a target domain.
    Adapt(AdaptArgs),
    /// Rank the test split of a domain with a checkpoint.
    Evaluate(EvaluateArgs),
    /// Test accuracy as a function of the amount of target training data.
    Sweep(SweepArgs),
    /// Pair in-domain and cross-domain results into tables and CSVs.
    Report(ReportArgs),
}

fn parse_transform(s: &str) -> Result<Transform, String> {
    Transform::parse(s).ok_or_else(|| format!("unknown strategy {s:?}, expected none, es, fs or en"))
}

fn parse_shape(s: &str) -> Result<(usize, usize), String> {
    let (v, d) = s.split_once(',').ok_or("expected V,D")?;
    let v = v.trim().parse().map_err(|_| format!("bad vocabulary size {v:?}"))?;
    let d = d.trim().parse().map_err(|_| format!("bad dimension {d:?}"))?;
    Ok((v, d))
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory of `<domain>.tsv` files.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedStatsArgs {
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    embeddings: Option<PathBuf>,
    /// Random initialisation of V rows and D columns instead of a file.
    #[arg(long, value_name = "V,D", value_parser = parse_shape)]
    random: Option<(usize, usize)>,
    #[arg(long, value_delimiter = ',', default_value = "none", value_parser = parse_transform)]
    strategy: Vec<Transform>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of row pairs sampled for cosine statistics.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Training configuration JSON, or the manifest of an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Domain name; several comma-separated names are merged.
    #[arg(long)]
    target: String,
    /// Pre-trained vectors; selects pretrained initialisation.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_parser = parse_transform)]
    strategy: Option<Transform>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    source_ckpt: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: String,
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// Output report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Adapt this checkpoint at every point instead of training from scratch.
    #[arg(long)]
    source_ckpt: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RATES)]
    rates: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of evaluation and sweep reports.
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xdsp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
