//! Command-line interface for training, evaluating and benchmarking
//! sample-wise stateful LSTM event detectors.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use sporal_core::{ErrorCategory, Result};

pub use commands::experiment::ExperimentArgs;
pub use commands::gradcheck::GradcheckArgs;
pub use commands::train::TrainOverrides;

#[derive(Parser)]
#[command(
    name = "sporal",
    about = "Sample-wise stateful LSTM training for sporadic event detection",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic sporadic-event dataset (CSV files + manifest).
    Synth {
        /// Synthetic dataset description (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for CSVs and manifest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run; writes per-epoch checkpoints, sidecars and a log.
    Train {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Train the delay variant with this interval in seconds.
        #[arg(long)]
        delta: Option<f64>,
        /// Override the variant: standard|delay|inverse.
        #[arg(long)]
        variant: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints or an ensemble; writes a metrics report.
    Eval {
        /// Evaluation configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Report path override (JSON; a .txt table is written alongside).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare BPTT gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 6)]
        channels: usize,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 8)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        lanes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        /// Corrupt the recurrent-weight gradients to prove the checker trips.
        #[arg(long)]
        corrupt: bool,
    },
    /// Run a named benchmark pipeline end to end.
    Experiment {
        /// delay-sweep | inverse-fusion | hypav | multi-source.
        name: String,
        /// Full-scale dataset descriptor (JSON), required with --full-scale.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Repetitions for seed-averaged experiments (hypav: 30, multi-source: 3).
        #[arg(long)]
        seeds: Option<usize>,
        /// Delay interval override in seconds.
        #[arg(long)]
        delta: Option<f64>,
        /// Directory for summary tables.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run on a real dataset manifest instead of desk-scale synthetic data.
        #[arg(long)]
        full_scale: bool,
    },
}

/// Execute a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, seed, out } => commands::synth::run(&config, seed, &out),
        Command::Train { config, seed, delta, variant, out } => {
            commands::train::run(&config, &TrainOverrides { seed, delta, variant, out })
        }
        Command::Eval { config, out } => commands::eval::run(&config, out.as_deref()),
        Command::Gradcheck {
            channels,
            hidden,
            classes,
            layers,
            window,
            lanes,
            seed,
            eps,
            corrupt,
        } => commands::gradcheck::run(&GradcheckArgs {
            channels,
            hidden,
            classes,
            layers,
            window,
            lanes,
            seed,
            eps,
            corrupt,
        }),
        Command::Experiment { name, config, seed, seeds, delta, out, full_scale } => {
            commands::experiment::run(&ExperimentArgs {
                name,
                config,
                seed,
                seeds,
                out,
                full_scale,
                delta,
            })
        }
    }
}

/// Parse argv-style arguments and run; the programmatic entry point used
/// by both `main` and the test suite.
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| sporal_core::Error::Config(e.to_string()))?;
    run(cli)
}

/// Exit code taxonomy: 0 ok, 2 config, 3 data, 4 training/eval.
pub fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Training => 4,
    }
}
