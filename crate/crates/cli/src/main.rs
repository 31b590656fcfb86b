use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "jdag", version, about = "Joint Bayesian structure learning for several Gaussian DAGs")]
struct Cli {
    /// Worker threads for per-column sampling; 0 picks min(columns, cores).
    #[arg(long, global = true, env = "JDAG_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a truth and data for one of the overlap scenarios.
    Simulate(SimulateArgs),
    /// Run the sampler and write posterior summaries.
    Fit(FitArgs),
    /// Compare the sampler with exact enumeration on a small random instance.
    Oracle(OracleArgs),
    /// Score a fit against a known truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    #[arg(long, default_value_t = 150)]
    pub p: usize,
    /// Rows per group.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    /// A JSON data manifest, or one CSV per group.
    #[arg(long, num_args = 1.., required = true)]
    pub data: Vec<PathBuf>,
    /// Hyperparameters as JSON; defaults are derived from the data when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "joint")]
    pub mode: jdag_core::sampler::Mode,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Subtract column means within each group before fitting.
    #[arg(long)]
    pub center: bool,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 5)]
    pub p: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub tv_tol: f64,
    /// Retained sweeps after burn-in.
    #[arg(long, default_value_t = 100_000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Data manifest carrying truth edge and diagonal files.
    #[arg(long)]
    pub truth: PathBuf,
    /// Directory with `selected_k.csv` and optionally `inclusion_k.csv`.
    #[arg(long)]
    pub fitted: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Fit(args) => commands::fit(&args, cli.threads),
        Command::Oracle(args) => commands::oracle(&args, cli.threads),
        Command::Evaluate(args) => commands::evaluate(&args),
    }
}
