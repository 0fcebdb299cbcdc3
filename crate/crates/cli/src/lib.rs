//! Library surface of the `dtomo` command-line tool: argument definitions,
//! subcommand implementations and the fit-report format.

pub mod commands;
pub mod report;

pub use commands::{run, Cli, CmdError, Outcome};
pub use report::FitReport;
