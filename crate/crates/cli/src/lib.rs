//! The `obfs` command line: argument parsing, configuration and the
//! subcommands that drive `obfs_core`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

use std::process::ExitCode;

use args::Cli;
use config::{Command, RunConfig};
pub use error::CliError;

/// Builds the effective config from an optional base file and the flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cli.command.apply(base);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    let cfg = effective_config(cli)?;
    match cfg.command {
        Command::Select => commands::select(&cfg),
        Command::Obf => commands::obf(&cfg),
        Command::Posterior => commands::posterior(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Sweep => commands::sweep(&cfg),
        Command::Verify => commands::verify(&cfg),
    }
}

/// Runs the CLI and reports failures as one JSON object on stderr.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
