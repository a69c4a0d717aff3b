use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    obfs_cli::main_with(obfs_cli::args::Cli::parse())
}
