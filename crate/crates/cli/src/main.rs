//! `h2ncm`: generate data, train and cross-validate hybrid models, simulate
//! counterfactuals, reduce causal graphs and summarize runs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use h2ncm_core::{Error, ErrorKind, Result, ScoreFn, Variant};
use serde::Serialize;

mod commands;
mod manifest;
mod report;

#[derive(Debug, Parser)]
#[command(name = "h2ncm", version, about = "Hybrid mechanistic/neural models with a causal ranking loss")]
struct Cli {
    /// Worker threads for training jobs (default: all cores).
    #[arg(long, global = true, env = "H2NCM_JOBS")]
    jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate the confounded synthetic dataset with intervention sets.
    GenSynthetic(GenArgs),
    /// Train one model on the train split, selecting on the validation split.
    Train(TrainArgs),
    /// Repeated nested cross-validation over a grid, one run per alpha.
    Cv(CvArgs),
    /// Simulate an episode under each intervention of its set.
    Counterfactual(CfArgs),
    /// Greedily simplify a causal graph for the masked neural model.
    ReduceGraph(ReduceArgs),
    /// Aggregate cross-validation reports into tables and charts.
    Report(ReportArgs),
    /// Re-run a command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "H2NCM_SEED", default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub train: usize,
    #[arg(long, default_value_t = 200)]
    pub val: usize,
    #[arg(long, default_value_t = 200)]
    pub test: usize,
    /// Steps per episode, context plus prediction window.
    #[arg(long, default_value_t = 100)]
    pub seq_len: usize,
    #[arg(long, default_value_t = 10)]
    pub horizon: usize,
}

/// Options shared by `train` and `cv`.
#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Hyperparameter grid (JSON, keyed by model name).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// JSON with optional "model" and "train" objects overriding the presets.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Softmax temperature of the causal loss.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub score: Option<ScoreArg>,
    #[arg(long, env = "H2NCM_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_variant)]
    pub model: Variant,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    /// One or more models, comma separated.
    #[arg(long, value_parser = parse_variant, value_delimiter = ',', required = true)]
    pub model: Vec<Variant>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.0001,0.001,0.01,0.1,1")]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 6)]
    pub outer: usize,
    #[arg(long, default_value_t = 4)]
    pub inner: usize,
    /// Fraction of training ranking labels to corrupt.
    #[arg(long, default_value_t = 0.0)]
    pub corruption: f64,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CfArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub episode: String,
    #[arg(long)]
    pub interventions: PathBuf,
    /// Episodes file holding the episode; defaults to searching `--data`.
    #[arg(long, required_unless_present = "data")]
    pub episodes: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScoreArg::Mean)]
    pub score: ScoreArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReduceArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Training epochs per candidate evaluation.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Accepted relative loss increase over the best so far.
    #[arg(long, default_value_t = 0.10)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub units: usize,
    #[arg(long, env = "H2NCM_SEED", default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output directory (default: the runs directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreArg {
    Mean,
    Max,
    Min,
}

impl From<ScoreArg> for ScoreFn {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Mean => ScoreFn::Mean,
            ScoreArg::Max => ScoreFn::Max,
            ScoreArg::Min => ScoreFn::Min,
        }
    }
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::from_name(s).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

/// Parses `argv` (without the program name) and runs the command.
pub fn dispatch(argv: &[String]) -> Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("h2ncm".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| Error::Input(e.to_string()))?;
    commands::run(cli.cmd, argv.to_vec())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.cmd, std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
