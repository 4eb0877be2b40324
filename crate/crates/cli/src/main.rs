//! `rdprune`: layer-wise sparsity allocation from rate-distortion curves.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdprune_core::{Aggregation, Solver};

#[derive(Parser, Debug)]
#[command(
    name = "rdprune",
    version,
    about = "Rate-distortion guided layer-wise pruning"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Model manifest (`model.json`).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Calibration file.
    #[arg(long, global = true, conflicts_with = "white_noise")]
    pub calib: Option<PathBuf>,
    /// Gaussian calibration inputs as `SHAPE,COUNT,SEED`, e.g. `1x8x8,256,7`.
    #[arg(long, global = true, value_name = "SHAPE,COUNT,SEED")]
    pub white_noise: Option<String>,
    /// Grid steps per layer (default 100; 10 for `verify`).
    #[arg(long = "grid", global = true, value_name = "S")]
    pub grid: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Mean)]
    pub mode: Mode,
    /// Drop non-monotone curve points before allocating (default).
    #[arg(long, global = true, overrides_with = "no_filter")]
    pub filter: bool,
    #[arg(long, global = true, overrides_with = "filter")]
    pub no_filter: bool,
    /// Fraction of the prunable weights to remove.
    #[arg(long, global = true, value_name = "R")]
    pub ratio: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = SolverArg::Exhaustive)]
    pub solver: SolverArg,
    /// Fix the number of budget bins.
    #[arg(long, global = true, value_name = "B", conflicts_with = "unit")]
    pub bins: Option<usize>,
    /// Fix the number of weights per budget bin.
    #[arg(long, global = true, value_name = "U")]
    pub unit: Option<usize>,
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for curve generation (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for white-noise calibration when no source is given.
    #[arg(long, global = true, value_name = "K", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate per-layer rate-distortion curves (`curves.csv`).
    Curves,
    /// Allocate per-layer pruning counts (`plan.json`).
    Allocate {
        /// Reuse curves from a previous `curves` run instead of a model.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Also write the DP table as `dp_trace.csv`.
        #[arg(long)]
        trace: bool,
    },
    /// Apply a plan and write the pruned model.
    Prune {
        #[arg(long)]
        plan: PathBuf,
    },
    /// Output distortion of a pruned model against `--model`.
    Eval {
        /// Pruned model manifest; defaults to `--model` itself.
        #[arg(long)]
        pruned: Option<PathBuf>,
    },
    /// Exhaustive-search audit of the allocator and the additivity sweep.
    Verify,
    /// Prune a fraction of the remaining weights per round.
    Iterate {
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Mean,
    #[value(alias = "worst-case")]
    Worst,
}

impl From<Mode> for Aggregation {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Mean => Aggregation::Mean,
            Mode::Worst => Aggregation::WorstCase,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverArg {
    Exhaustive,
    Ternary,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exhaustive => Solver::Exhaustive,
            SolverArg::Ternary => Solver::Ternary,
        }
    }
}

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_FORMAT: u8 = 3;
const EXIT_GUARD: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<rdprune_core::Error>() {
        Some(e) if e.is_infeasible() => EXIT_INFEASIBLE,
        Some(e) if e.is_format() => EXIT_FORMAT,
        Some(e) if e.is_guard() => EXIT_GUARD,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RDPRUNE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
