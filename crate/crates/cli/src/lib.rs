//! Command-line front end: argument parsing, configuration merging, and
//! the mapping from library errors to exit codes.

pub mod commands;
pub mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use iss_core::coding::Coding;
use iss_core::dagtest::ParentRule;
use iss_core::pvalue::OrderingRule;
use iss_core::simulation::{Experiment, Shape};

pub use manifest::{RunManifest, CONFIG_ECHO_FILE, MANIFEST_FILE};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "iss", version, about = "Isotonic subgroup selection with data turnover")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen and validate in both directions; write corner tables.
    Analyze(AnalyzeArgs),
    /// Run one of the simulation experiments over a grid of cells.
    Simulate(SimulateArgs),
    /// Compare a corner set against exposure-count cutoff rules.
    Evaluate(EvaluateArgs),
    /// Exact combination counts for an UpSet-style plot.
    UpsetData(UpsetArgs),
    /// Size of the upward closure of a corner set.
    CornersCount(CornersCountArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV with item columns, Y and PART.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON list of item specifications.
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub parent_rule: Option<ParentRule>,
    #[arg(long)]
    pub coding_red_to_blue: Option<Coding>,
    #[arg(long)]
    pub coding_blue_to_red: Option<Coding>,
    #[arg(long)]
    pub ordering: Option<OrderingRule>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use tiered alpha allocation.
    #[arg(long)]
    pub tiering: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub mode: Option<Experiment>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub target_mass: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub shape: Option<Vec<Shape>>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed0: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub ordering: Option<OrderingRule>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    /// Corner set JSON as written by `analyze`.
    #[arg(long)]
    pub corners: Option<PathBuf>,
    /// Exposure-count cutoffs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Args)]
pub struct UpsetArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CornersCountArgs {
    #[command(flatten)]
    pub common: Common,
    /// Corner set JSON.
    #[arg(long, conflicts_with = "grid")]
    pub corners: Option<PathBuf>,
    /// Preset grid for `--corner`: `ace-binary` or `ace-frequency`.
    #[arg(long, requires = "corner")]
    pub grid: Option<String>,
    /// A corner as `{NAME=level, ...}`; repeatable.
    #[arg(long)]
    pub corner: Vec<String>,
    /// Also count the preimage of a binary set on the frequency grid.
    #[arg(long)]
    pub lift: bool,
}

/// Exit code for a failed run.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use iss_core::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
                Error::Data(_) | Error::Csv(_) => EXIT_DATA,
                Error::Calibration { .. } | Error::Undefined(_) => EXIT_NUMERIC,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::UpsetData(a) => commands::upset_data(&a),
        Command::CornersCount(a) => commands::corners_count(&a),
    }
}
