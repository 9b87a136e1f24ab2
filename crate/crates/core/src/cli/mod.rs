//! Command-line front end: `train`, `eval`, `gradcheck`, `inspect` and `synth`.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 numerical error.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_eval, cmd_gradcheck, cmd_inspect, cmd_synth, cmd_train, Outcome};
pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration; the desk defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.max_epochs=1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Debug, Parser)]
#[command(name = "parfnet", version, about = "Train and inspect PARF-Net segmentation models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write logs, a checkpoint and the resolved config.
    Train(CommonArgs),
    /// Evaluate a checkpoint and write per-image metrics.
    Eval(CommonArgs),
    /// Finite-difference gradient checks in double precision.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// `all`, or a parameter-name prefix of the full model such as `enc1.parf`.
        #[arg(long, default_value = "all")]
        scope: String,
        /// Elements checked per parameter tensor.
        #[arg(long, default_value_t = 4)]
        max_elements: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Dump Conv-PARF attention maps and the predicted mask as PGM files.
    Inspect {
        #[command(flatten)]
        common: CommonArgs,
        /// PGM/PPM input; the first dataset sample is used when omitted.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Write a synthetic dataset in the `images/` + `masks/` layout.
    Synth(CommonArgs),
}

impl CommonArgs {
    /// Loads the config, applies `--set`, `--seed` and `--out`, and validates.
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::desk(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Maps a library error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Gradcheck {
            common,
            scope,
            max_elements,
            inject_fault,
        } => cmd_gradcheck(&common, &scope, max_elements, inject_fault),
        Command::Inspect { common, image } => cmd_inspect(&common, image.as_deref()),
        Command::Synth(args) => cmd_synth(&args),
    };
    match result {
        Ok(Outcome::Success) => EXIT_OK,
        Ok(Outcome::CheckFailed) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (without the program name) and runs the command.
pub fn run_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("parfnet")).chain(args.into_iter().map(Into::into));
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
