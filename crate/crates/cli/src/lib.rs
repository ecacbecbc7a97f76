//! Command-line front end: every subcommand writes CSV/JSON outputs plus a
//! `run.conf` and `manifest.json` that reproduce the run.

pub mod args;
mod commands;
pub mod config;
pub mod error;
mod output;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = config::expand_config(argv.into_iter().map(Into::into).collect())?;
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    commands::dispatch(cli.command)
}
