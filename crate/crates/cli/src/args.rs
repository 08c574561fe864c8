use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use loracomp_core::tasks::{Lang, TaskKind};

/// Train, compose, evaluate and serve low-rank adapters for compositional
/// multi-tasking.
#[derive(Debug, Parser)]
#[command(name = "loracomp", version)]
pub struct Cli {
    /// Artifact directory read and written by every command [default: artifacts]
    #[arg(long, global = true, value_name = "DIR", display_order = 900)]
    pub artifacts: Option<PathBuf>,

    /// Seed from which all randomness of the command is derived [default: 0]
    #[arg(long, global = true, value_name = "N", display_order = 901)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn artifact_dir(&self) -> PathBuf {
        self.artifacts.clone().unwrap_or_else(|| PathBuf::from("artifacts"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the summarisation, translation and compositional datasets
    GenData(GenDataArgs),
    /// Pretrain the base model and freeze it
    Pretrain(PretrainArgs),
    /// Train a single-task adapter (sum or trans-<lang>)
    TrainLora(TrainLoraArgs),
    /// Train a joint-expert adapter directly on compositional data
    TrainJoint(TrainJointArgs),
    /// Learn the projection merge over the two single-task adapters
    TrainProjection(TrainProjectionArgs),
    /// Fit LoraHub merge coefficients on validation data
    FitLorahub(FitLorahubArgs),
    /// Score methods with ROUGE and parameter accounting
    Eval(EvalArgs),
    /// Time methods on a seeded subset of the test data
    Bench(BenchArgs),
    /// Run the HTTP inference service
    Serve(ServeArgs),
    /// Describe an artifact file, or the whole artifact directory
    Inspect(InspectArgs),
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: loracomp_core::Error| e.to_string())
}

fn parse_lang(s: &str) -> Result<Lang, String> {
    s.parse().map_err(|e: loracomp_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Single dataset to write: sum, trans[-es|-de] or comp[-es|-de] [default: all three for --lang]
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,

    /// Target mapping for the translation and compositional datasets
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,

    /// Training examples per dataset
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    /// Validation examples per dataset
    #[arg(long, default_value_t = 120)]
    pub validation: usize,

    /// Test examples per dataset
    #[arg(long, default_value_t = 120)]
    pub test: usize,

    /// Output file; only with --task [default: <artifacts>/data/<task>.jsonl]
    #[arg(long, value_name = "FILE", requires = "task")]
    pub out: Option<PathBuf>,
}

/// Optimiser overrides; unset flags keep the preset of the command.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Passes over the training data
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,

    /// Examples per optimiser step
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Random training examples used per epoch
    #[arg(long)]
    pub max_examples: Option<usize>,

    /// Global gradient-norm clip
    #[arg(long)]
    pub grad_clip: Option<f64>,

    /// Decay the learning rate linearly to zero (true or false)
    #[arg(long, value_name = "BOOL")]
    pub lr_decay: Option<bool>,
}

#[derive(Debug, Args)]
pub struct LoraArgs {
    /// Adapter rank r
    #[arg(long)]
    pub rank: Option<usize>,

    /// Adapter scale numerator; the update is (alpha / r)·B·A [default: r/2]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Dropout on the adapter input during training
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// TOML file with model dimensions; missing keys keep the desk defaults
    #[arg(long, value_name = "FILE")]
    pub model_config: Option<PathBuf>,

    /// Held-out copy accuracy at which training stops
    #[arg(long)]
    pub target_accuracy: Option<f64>,

    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainLoraArgs {
    /// Task the adapter learns: sum or trans[-es|-de]
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,

    #[command(flatten)]
    pub lora: LoraArgs,

    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainJointArgs {
    /// Target mapping of the compositional task
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,

    #[command(flatten)]
    pub lora: LoraArgs,

    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainProjectionArgs {
    /// Target mapping of the compositional task
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,

    /// Projection rank s
    #[arg(long)]
    pub rank: Option<usize>,

    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct FitLorahubArgs {
    /// Target mapping of the compositional task
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,

    /// Loss evaluations allowed to the coefficient search
    #[arg(long)]
    pub budget: Option<usize>,

    /// Validation examples the loss is measured on
    #[arg(long)]
    pub examples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Target mapping of the compositional task
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,

    /// `all` or a comma-separated list of method names
    #[arg(long, default_value = "all")]
    pub methods: String,

    /// JSONL examples to score [default: <artifacts>/data/comp-<lang>.jsonl]
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,

    /// Split of the data to use: train, validation, test or all
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Write the report as CSV
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Fraction of the examples timed, chosen by a seeded shuffle
    #[arg(long, default_value_t = 0.2)]
    pub subset_fraction: f64,

    /// Write the timings as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Write the timings as CSV
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service configuration; LORACOMP_* variables and flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Address to bind
    #[arg(long)]
    pub host: Option<String>,

    /// Port to bind
    #[arg(long)]
    pub port: Option<u16>,

    /// Target mappings to serve, comma separated
    #[arg(long, value_delimiter = ',', value_parser = parse_lang)]
    pub langs: Option<Vec<Lang>>,

    /// Requests allowed to wait behind the one being served
    #[arg(long)]
    pub queue_depth: Option<usize>,

    /// Append one JSON line per request to this file
    #[arg(long, value_name = "FILE")]
    pub request_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Artifact file to describe [default: summarise the artifact directory]
    pub path: Option<PathBuf>,

    /// Target mapping used when summarising the directory
    #[arg(long, default_value = "es", value_parser = parse_lang)]
    pub lang: Lang,
}
