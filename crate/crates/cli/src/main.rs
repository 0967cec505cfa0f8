//! `famsel`: selection-adjusted testing of families of hypotheses.
//!
//! Exit codes: 0 success, 1 property violation, 2 input error,
//! 3 configuration error.

mod commands;
mod input;
mod report;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use famsel::{ErrorMetric, Procedure};

use spec::{parse_metric, parse_procedure, parse_rule, RuleSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Violation(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation(_) => 1,
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl From<famsel::Error> for CliError {
    fn from(e: famsel::Error) -> Self {
        use famsel::Error as E;
        match e {
            E::PValueOutOfRange { .. } | E::EmptyFamily(_) | E::NoFamilies => {
                CliError::Input(e.to_string())
            }
            E::InvariantViolation(_) => CliError::Violation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

#[derive(Debug, Parser)]
#[command(name = "famsel", version, about = "Selection-adjusted testing of families of hypotheses")]
struct Cli {
    /// Worker threads for simulations (default: all cores).
    #[arg(long, global = true, env = "FAMSEL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select families from a p-value file and test the selected ones.
    Analyze(AnalyzeArgs),
    /// Reproduce the selection-bias table: exact values and Monte Carlo.
    Table1(Table1Args),
    /// Estimate the average error over selected families by simulation.
    Simulate(SimulateArgs),
    /// Search for violations of simpleness, concordance or error control.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjustMode {
    /// `simple` for simple rules, `general` otherwise.
    Auto,
    /// Test every selected family at `R * q / m`.
    Simple,
    /// Test family `i` at `R_min(i) * q / m`.
    General,
    /// Repeat the simple adjustment until every selected family has a
    /// rejection.
    Iterative,
    /// Test every selected family at `q`.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// CSV with header `family,hypothesis,p_value`; `-` reads standard input.
    input: PathBuf,
    /// Selection rule: minp:T, topk:K or global:COMBINER:PROCEDURE[:LEVEL].
    #[arg(long, value_parser = parse_rule)]
    rule: RuleSpec,
    /// Procedure used inside each selected family.
    #[arg(long, value_parser = parse_procedure, default_value = "bonferroni")]
    procedure: Procedure,
    /// Target level for the average error over selected families.
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    #[arg(long, value_enum, default_value_t = AdjustMode::Auto)]
    adjust: AdjustMode,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Table1Args {
    /// Monte Carlo replicates per row; 0 prints the exact values only.
    #[arg(long, default_value_t = 100_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TruthArgs {
    /// Every hypothesis is null (the default).
    #[arg(long, conflicts_with_all = ["effect", "signal_families", "non_null_fraction"])]
    all_null: bool,
    /// Shift of the non-null z-scores; enables the mixed truth model.
    #[arg(long)]
    effect: Option<f64>,
    /// Fraction of families that contain non-nulls.
    #[arg(long, default_value_t = 0.3, requires = "effect")]
    signal_families: f64,
    /// Fraction of non-nulls within each such family.
    #[arg(long, default_value_t = 0.5, requires = "effect")]
    non_null_fraction: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Number of families.
    #[arg(long)]
    m: usize,
    /// Hypotheses per family.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Selection rule (default: minp:Q).
    #[arg(long, value_parser = parse_rule)]
    rule: Option<RuleSpec>,
    #[arg(long, value_parser = parse_procedure, default_value = "bonferroni")]
    procedure: Procedure,
    /// Error measure: pfer, fwer, fdr, fdx:GAMMA, kfwer:K or kfdr:K.
    #[arg(long, value_parser = parse_metric, default_value = "fwer")]
    metric: ErrorMetric,
    #[command(flatten)]
    truth: TruthArgs,
    /// Equicorrelation of all test statistics (default: independent).
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value_t = AdjustMode::Auto, conflicts_with = "unadjusted")]
    adjust: AdjustMode,
    /// Shorthand for `--adjust none`.
    #[arg(long)]
    unadjusted: bool,
    /// Estimate the quantity controlled under positive dependence
    /// (PFER-type average for bonferroni, FDR-type for bh) at R_min levels.
    #[arg(long, conflicts_with_all = ["unadjusted", "metric"])]
    prds: bool,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Replace one selected family's p-values and watch |S|.
    Simple,
    /// Raise off-family p-values and watch R_min.
    Concordant,
    /// Simulate and compare the average error with q.
    Control,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum)]
    suite: Suite,
    #[arg(long, value_parser = parse_rule)]
    rule: RuleSpec,
    /// Procedure inside selected families (control suite).
    #[arg(long, value_parser = parse_procedure, default_value = "bh")]
    procedure: Procedure,
    #[arg(long, default_value_t = 0.05)]
    q: f64,
    /// Perturbations per family (simple) or per ensemble (concordant).
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Random ensembles to search when no input file is given.
    #[arg(long, default_value_t = 200)]
    ensembles: usize,
    /// Check this p-value file instead of random ensembles.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Families per random ensemble or per simulated replicate.
    #[arg(long)]
    m: Option<usize>,
    /// Hypotheses per family in random ensembles or simulations.
    #[arg(long)]
    n: Option<usize>,
    /// Replicates for the control suite.
    #[arg(long, default_value_t = 20_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::Analyze(args) => commands::analyze(&args),
        Command::Table1(args) => commands::table1(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Check(args) => commands::check(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("famsel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
