use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "layoutbench", version, about = "Generate, run and score LLM-written GDSII layout scripts")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the benchmark matrix in baseline or solomon mode, then write the report.
    Run(RunArgs),
    /// Score one GDSII file against a task's ground truth.
    Evaluate(EvaluateArgs),
    /// Aggregate an output directory and write report/.
    Report(ReportArgs),
    /// Refine one task with one backend by typing feedback after each attempt.
    Interact(InteractArgs),
    /// Write the benchmark manifest and ground-truth GDSII files.
    AuthorTruths(AuthorArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Solomon,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Answer every request from the replay store (default DIR: <out>/replay-store).
    #[arg(long, value_name = "DIR", num_args = 0..=1, require_equals = true, conflicts_with = "record")]
    pub replay: Option<Option<PathBuf>>,
    /// Call the backends and save every exchange (default DIR: <out>/replay-store).
    #[arg(long, value_name = "DIR", num_args = 0..=1, require_equals = true)]
    pub record: Option<Option<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct ExecArgs {
    /// Script time limit in seconds.
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<f64>,
    /// Evaluation raster size along the long axis, overriding the manifest.
    #[arg(long, value_name = "PX")]
    pub resolution: Option<u32>,
    /// Concurrent script executions.
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Task directory holding manifest.toml.
    #[arg(long, value_name = "DIR")]
    pub tasks: PathBuf,
    /// Backends configuration file.
    #[arg(long, value_name = "FILE")]
    pub backends: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub store: StoreArgs,
    /// Steering file with prompt fragments.
    #[arg(long, value_name = "FILE")]
    pub steering: Option<PathBuf>,
    /// Restrict to these task ids (repeatable).
    #[arg(long = "task", value_name = "ID")]
    pub tasks_filter: Vec<String>,
    /// Runs per backend.
    #[arg(long, default_value_t = 5)]
    pub runs: u32,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Stamp the report with this instant (YYYY-MM-DDTHH:MM:SS) instead of now.
    #[arg(long, value_name = "TIME")]
    pub fixed_clock: Option<String>,
    /// Skip writing report/.
    #[arg(long)]
    pub no_report: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// GDSII file to score.
    pub gds: PathBuf,
    #[arg(long, value_name = "ID")]
    pub task: String,
    #[arg(long, value_name = "DIR")]
    pub tasks: PathBuf,
    #[arg(long, value_name = "PX")]
    pub resolution: Option<u32>,
    /// Print the verdict as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "DIR")]
    pub tasks: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Reviewer overrides ([[override]] key/category/note).
    #[arg(long, value_name = "FILE")]
    pub overrides: Option<PathBuf>,
    #[arg(long, value_name = "TIME")]
    pub fixed_clock: Option<String>,
}

#[derive(Debug, Args)]
pub struct InteractArgs {
    #[arg(long, value_name = "DIR")]
    pub tasks: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub backends: PathBuf,
    #[arg(long, value_name = "ID")]
    pub task: String,
    /// Backend to talk to; defaults to the first generator.
    #[arg(long, value_name = "ID")]
    pub backend: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub store: StoreArgs,
    #[arg(long, value_name = "FILE")]
    pub steering: Option<PathBuf>,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct AuthorArgs {
    /// Directory to write manifest.toml, truths/ and rules/ into.
    #[arg(long, value_name = "DIR")]
    pub tasks: PathBuf,
}
