//! `freqinr`: train, evaluate and run the arbitrary-scale super-resolution model.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage/configuration/input
//! error, 3 training aborted on a non-finite loss.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freqinr_core::Error as CoreError;

#[derive(Parser)]
#[command(name = "freqinr", version, about = "Arbitrary-scale super-resolution with an adaptive DCT frequency loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set loss.lambda=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (overrides `output_dir` and $FREQINR_OUT).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes metrics.jsonl, checkpoints and model.json.
    Train(ConfigArgs),
    /// Benchmark a checkpoint against bicubic upsampling.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Super-resolve one PNG.
    Upscale {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Scale factor >= 1; `R` or `RYxRX`.
        #[arg(long)]
        scale: String,
        /// Output PNG; defaults to `<input stem>_x<scale>.png` next to the input.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write the bicubic upsampling as `<output stem>_bicubic.png`.
        #[arg(long)]
        baseline: bool,
    },
    /// DCT magnitude maps of one image, plus band distances for a pair.
    Spectrum {
        a: PathBuf,
        b: Option<PathBuf>,
        #[arg(long, short, default_value = ".")]
        out: PathBuf,
    },
    /// Finite-difference gradient checks; exit 1 on any failure.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Test fixture: negate the gradient entering the frequency loss.
        #[arg(long, hide = true)]
        inject_flip_adfl: bool,
    },
}

pub enum Outcome {
    Success,
    CheckFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<CoreError>()) {
        Some(CoreError::NonFiniteLoss { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(cfg) => commands::train(&cfg),
        Command::Eval { cfg, checkpoint } => commands::eval(&cfg, &checkpoint),
        Command::Upscale { checkpoint, input, scale, output, baseline } => {
            commands::upscale(&checkpoint, &input, &scale, output.as_deref(), baseline)
        }
        Command::Spectrum { a, b, out } => commands::spectrum(&a, b.as_deref(), &out),
        Command::Gradcheck { cfg, seed, inject_flip_adfl } => commands::gradcheck(&cfg, seed, inject_flip_adfl),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
