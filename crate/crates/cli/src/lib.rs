//! Command-line front end: configuration and weights files, CSV and SVG
//! output, and the `train`, `simulate`, `sensitivity` and `roa` commands.

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod kv;
pub mod svg;
pub mod weights;

use std::ffi::OsString;

use clap::Parser;

pub use commands::{Cli, EXIT_NO_SUCCESS, EXIT_OK, EXIT_USAGE};
pub use config::RunConfig;
pub use error::CliError;
pub use weights::WeightsFile;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 on usage or configuration errors, 2
/// when training ends without reaching its threshold.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}
