#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod io;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "fairgm",
    version,
    about = "Fair estimation of sparse graphical models"
)]
struct Cli {
    /// Validate inputs and write the manifest without computing anything.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate ground-truth graphs and grouped samples.
    Simulate(SimulateArgs),
    /// Fit the standard or the fair estimator to a grouped data file.
    Fit(FitArgs),
    /// Score estimates against ground truth and compare a standard and a fair run.
    Evaluate(EvaluateArgs),
    /// Run a named experiment suite end to end.
    Benchmark(BenchmarkArgs),
    /// Check that every objective in a trace file is non-increasing.
    ValidateTrace(ValidateTraceArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SimKind {
    Gaussian,
    Ising,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    kind: SimKind,
    #[arg(long)]
    p: usize,
    /// Number of diagonal blocks (gaussian).
    #[arg(long, default_value_t = 5)]
    q: usize,
    /// Blocks reset to the identity for each further group (gaussian).
    #[arg(long, default_value_t = 2)]
    resets: usize,
    /// Number of hub nodes (ising).
    #[arg(long, default_value_t = 3)]
    hubs: usize,
    /// Hubs removed for each further group (ising).
    #[arg(long, default_value_t = 2)]
    removals: usize,
    /// Number of groups; defaults to the number of sizes given with --n.
    #[arg(long)]
    k: Option<usize>,
    /// Sample size per group, comma separated; a single value applies to every group.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = fairgm::synth::DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = fairgm::synth::DEFAULT_THINNING)]
    thinning: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "group")]
    group_col: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Glasso,
    Covgraph,
    Binnet,
}

impl From<ModelArg> for fairgm::ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Glasso => fairgm::ModelKind::GLasso,
            ModelArg::Covgraph => fairgm::ModelKind::CovGraph,
            ModelArg::Binnet => fairgm::ModelKind::BinNet,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PenaltyArg {
    Square,
    Exp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum StopArg {
    GradientMap,
    RawGradient,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PceeArg {
    Absolute,
    Literal,
}

impl From<PceeArg> for fairgm::metrics::PceeVariant {
    fn from(v: PceeArg) -> Self {
        match v {
            PceeArg::Absolute => fairgm::metrics::PceeVariant::Absolute,
            PceeArg::Literal => fairgm::metrics::PceeVariant::Literal,
        }
    }
}

/// Solver settings; flags override values read from --config.
#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// JSON file with solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Ridge weight on the disparity objectives; chosen automatically when omitted.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    ell0: Option<f64>,
    #[arg(long)]
    ell_growth: Option<f64>,
    #[arg(long)]
    ell_decay: Option<f64>,
    #[arg(long, value_enum)]
    ista_stop: Option<StopArg>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
#[group(id = "mode", required = true, multiple = false)]
struct ModeArgs {
    #[arg(long)]
    fair: bool,
    #[arg(long)]
    standard: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    model: ModelArg,
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Rescale every feature to zero mean and unit variance before grouping.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Output directory of a standard fit, or a matrix CSV.
    #[arg(long)]
    standard: Option<PathBuf>,
    /// Output directory of a fair fit, or a matrix CSV.
    #[arg(long)]
    fair: Option<PathBuf>,
    /// Ground-truth graphs, one matrix CSV per group, comma separated.
    #[arg(long, value_delimiter = ',')]
    truth: Vec<PathBuf>,
    /// Edge threshold; defaults to the lambda recorded in the fit reports.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum, default_value = "absolute")]
    pcee: PceeArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// sim-glasso, sim-covgraph, sim-binnet, sens-P, sens-N, sens-ratio or sens-K.
    suite: String,
    /// Seeds as a list or an inclusive range, e.g. 1..10.
    #[arg(long, default_value = "1")]
    seeds: String,
    /// Values of the varied parameter, as a list or an inclusive integer range.
    #[arg(long, alias = "p", alias = "n", alias = "ratios", alias = "k")]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "absolute")]
    pcee: PceeArg,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateTraceArgs {
    trace: PathBuf,
    /// Allowed increase, relative to max(1, |F|).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("FAIRGM_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            CliError::input(format!(
                "FAIRGM_THREADS must be a positive integer, got '{v}'"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::io)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a, cli.dry_run),
        Command::Fit(a) => commands::fit(&a, cli.dry_run),
        Command::Evaluate(a) => commands::evaluate(&a, cli.dry_run),
        Command::Benchmark(a) => commands::benchmark(&a, cli.dry_run),
        Command::ValidateTrace(a) => commands::validate_trace(&a, cli.dry_run),
    }
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        super::Cli::command().debug_assert();
    }
}
