use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    yprsim::cli::run(yprsim::cli::Cli::parse())
}
