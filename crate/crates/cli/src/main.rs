//! `retina`: train, apply and inspect the retina-inspired low-light restorer.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or data, 3 numeric failure,
//! 4 gradient check failed.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use retina_core::{BcVariant, PaddingMode};

#[derive(Debug, Parser)]
#[command(name = "retina", version, about = "Retina-inspired low-light image restoration")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on the our485 split and write a checkpoint
    Train(TrainArgs),
    /// Restore a single low-light PNG
    Enhance(EnhanceArgs),
    /// Score a checkpoint on the eval15 split
    Eval(EvalArgs),
    /// Export kernel heatmaps and raw weights
    Kernels(KernelsArgs),
    /// Apply one bipolar-cell variant to an image
    Compare(CompareArgs),
    /// Check the analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Padding {
    Replicate,
    Zero,
}

impl From<Padding> for PaddingMode {
    fn from(p: Padding) -> Self {
        match p {
            Padding::Replicate => PaddingMode::Replicate,
            Padding::Zero => PaddingMode::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Variant {
    Recursive,
    Fir,
    Residual,
}

impl From<Variant> for BcVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Recursive => BcVariant::Recursive,
            Variant::Fir => BcVariant::Fir,
            Variant::Residual => BcVariant::Residual,
        }
    }
}

/// Where to find image pairs: a LOL root, or explicit low/high directories.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// LOL root containing our485/ and eval15/
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Override the low-light directory
    #[arg(long, requires = "high_dir")]
    low_dir: Option<PathBuf>,
    /// Override the normal-light directory
    #[arg(long, requires = "low_dir")]
    high_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Width of the Gaussian that initializes the 3x3 stage
    #[arg(long, default_value_t = 1.0)]
    sigma_g: f64,
    /// Center width of the DoG that initializes the 5x5 stage
    #[arg(long, default_value_t = 0.5)]
    sigma1: f64,
    /// Surround width of the DoG that initializes the 5x5 stage
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_enum, default_value_t = Padding::Replicate)]
    padding: Padding,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also write `<out>.epochN.json` after every epoch
    #[arg(long)]
    checkpoint_every_epoch: bool,
    /// Decode the whole training set into memory first
    #[arg(long)]
    preload: bool,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Print the report as JSON on stdout (the table then goes to stderr)
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct KernelsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    variant: Variant,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
    /// Width of the 3x3 horizontal-cell Gaussian
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = Padding::Replicate)]
    padding: Padding,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print min/max/mean of the unclamped result
    #[arg(long)]
    stats: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds to check, starting at --seed
    #[arg(long, default_value_t = 1)]
    draws: u64,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    threshold: f64,
    /// Offset every analytic gradient (negative control)
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(commands::EXIT_USAGE),
            };
        }
    };

    let result = match cli.command {
        Command::Train(args) => commands::train(args),
        Command::Enhance(args) => commands::enhance(args),
        Command::Eval(args) => commands::eval(args),
        Command::Kernels(args) => commands::kernels(args),
        Command::Compare(args) => commands::compare(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
