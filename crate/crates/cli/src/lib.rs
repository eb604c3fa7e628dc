//! Command-line surface: corpus synthesis and building, separator
//! pre-training, training under each regime, attacker probes, evaluation and
//! multi-seed reports.
//!
//! Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 runtime.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rdalm_train::Regime;

pub mod commands;
pub mod config;
pub mod error;
pub mod layout;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, Result, EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "rdalm", version, about = "Privacy-preserving sound event detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; replaces the one from the config or environment.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Replace existing outputs instead of refusing.
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct RunSelection {
    #[arg(long, value_name = "NAME")]
    pub regime: Option<Regime>,
    /// Base seed; repetition k uses seed + k.
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "INT")]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic toy corpus and its manifest.
    SynthData(Common),
    /// Build the mixture corpus from event and speech source directories.
    BuildData(Common),
    /// Pre-train the speech separator on the training pairs.
    PretrainSep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "INT")]
        seed: Option<u64>,
    },
    /// Train one checkpoint per repetition seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runs: RunSelection,
        /// Run repetitions on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Train an attacker probe on frozen latents and report SAD/AUC.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runs: RunSelection,
        /// Attack this checkpoint instead of the selected runs.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        parallel: bool,
    },
    /// Report SED accuracy and separator SDR on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        runs: RunSelection,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "validation", "test"])]
        split: String,
    },
    /// Aggregate attacked runs into mean and std per regime, a table and ROC CSVs.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "INT")]
        repetitions: Option<usize>,
        /// Run directories to aggregate; defaults to every run under the output directory.
        run_dirs: Vec<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("rdalm: {e}");
            e.exit_code()
        }
    }
}
