use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "sscnn",
    version,
    about = "Structured-component forecasting: train, predict, evaluate, analyze, count parameters",
    after_help = "Exit codes: 0 ok, 1 I/O or data error, 2 usage or configuration error, \
                  3 training aborted on a non-finite loss, 4 output exists (use --force).\n\
                  Environment: SSCNN_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus per-epoch history
    Train(TrainArgs),
    /// Forecast the horizon after the last input window of a dataset
    Predict(PredictArgs),
    /// Report test-split MSE and MAE of a checkpoint
    Evaluate(EvaluateArgs),
    /// Correlation and decomposition diagnostics as long-format tables
    Analyze(AnalyzeArgs),
    /// Count model parameters for a configuration
    Params(ParamsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DateColumn {
    Auto,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Autocorr,
    Crosscorr,
    Stages,
    DecompCheck,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row and one column per series
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Whether the first column holds timestamps
    #[arg(long, value_enum, default_value = "auto")]
    pub date_column: DateColumn,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Input window length; a multiple of --cycle
    #[arg(long, default_value_t = 168)]
    pub t_in: usize,
    /// Forecast horizon
    #[arg(long, default_value_t = 96)]
    pub t_out: usize,
    /// Stacked decomposition layers
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Hidden channels
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Seasonal cycle length in steps
    #[arg(long, default_value_t = 24)]
    pub cycle: usize,
    /// Short-term window length
    #[arg(long, default_value_t = 16)]
    pub delta: usize,
    /// Fusion convolution kernel size
    #[arg(long, default_value_t = 2)]
    pub kernel: usize,
    /// Spatial component
    #[arg(long, value_enum, default_value = "on")]
    pub spatial: Switch,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    /// Adam learning rate
    #[arg(long, default_value_t = 0.0005)]
    pub lr: f64,
    /// Windows per batch
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Maximum epochs
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Seed for initialization and shuffling
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file of defaults; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Checkpoint to write; the normalizer goes to <PATH>.normalizer.json
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// History CSV [default: <checkpoint>.history.csv]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Forecast file [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    /// Metrics file [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// TOML file of defaults; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// CSV file (not needed for decomp-check)
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Whether the first column holds timestamps
    #[arg(long, value_enum, default_value = "auto")]
    pub date_column: DateColumn,
    /// Report to produce
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Seasonal cycle length in steps
    #[arg(long, default_value_t = 24)]
    pub cycle: usize,
    /// Short-term window length
    #[arg(long, default_value_t = 4)]
    pub delta: usize,
    /// Trailing history of the long-term and seasonal controllers; a multiple of --cycle
    #[arg(long, default_value_t = 168)]
    pub t_in: usize,
    /// Controlled components, a comma list over lt, se, st (or none)
    #[arg(long, default_value = "lt,se,st")]
    pub control: String,
    /// Largest lag reported
    #[arg(long, default_value_t = 48)]
    pub max_lag: usize,
    /// Monte Carlo trials for decomp-check
    #[arg(long, default_value_t = 10000)]
    pub trials: usize,
    /// Component dimension for decomp-check
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    /// Seed for decomp-check
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    /// TOML file of defaults; command-line flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma list of horizons to tabulate instead of --t-out
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub sweep_t_out: Vec<usize>,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}
