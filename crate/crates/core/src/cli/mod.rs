//! Command-line entry point. Exit codes: 0 success, 1 invalid input,
//! 2 runtime failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{AudioConfig, EvaluateConfig, ModelConfig, RunConfig, DEFAULT_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "voice2face", version, about = "Generate faces from voice recordings with a three-player GAN")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// Corpus directory holding manifest.csv.
    #[arg(long, global = true, default_value = "corpus")]
    pub corpus_root: PathBuf,
    /// TOML settings file with one section per module.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for all randomness [default: 7].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for checkpoints, reports and generated images.
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,
    /// Allow overwriting existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic voice/face corpus into the output directory.
    SynthData(SynthArgs),
    /// Cache normalized log-mel features next to the corpus.
    Prepare,
    /// Pretrain the voice embedder on speaker identity.
    Pretrain,
    /// Adversarial training from a pretrained checkpoint.
    Train(TrainArgs),
    /// Generate faces for a WAV file or a directory of WAV files.
    Generate(GenerateArgs),
    /// Run an evaluation protocol on the test split.
    Evaluate(EvaluateArgs),
    /// Finite-difference checks of every layer and step objective.
    Gradcheck,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of synthetic identities.
    #[arg(long)]
    pub identities: Option<usize>,
    #[arg(long)]
    pub voices_per_identity: Option<usize>,
    #[arg(long)]
    pub faces_per_identity: Option<usize>,
    /// Identities held out for evaluation.
    #[arg(long)]
    pub test_identities: Option<usize>,
    #[arg(long)]
    pub validation_identities: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pretrained checkpoint [default: <output-dir>/pretrained.ckpt].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Overrides the configured iteration count.
    #[arg(long)]
    pub iterations: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// WAV file or directory of WAV files.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    Matching,
    Gender,
    Specificity,
    Grids,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "matching")]
    pub protocol: Protocol,
    /// Imposters share the true speaker's gender.
    #[arg(long)]
    pub stratified: bool,
    /// Number of sampled trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Build every possible trial instead of sampling.
    #[arg(long)]
    pub exhaustive: bool,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
