pub mod check;
pub mod fit;
pub mod report;
pub mod simulate;

use crate::cli::{Cli, Command};
use crate::error::Result;

/// Runs a parsed command line. `argv` is recorded in manifests.
pub fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate::run(a, argv),
        Command::Fit(a) => fit::run(a, argv),
        Command::Report(a) => report::run(a, argv),
        Command::Check(a) => check::run(a),
    }
}
