//! The `loracomp` command line: argument definitions and the command
//! implementations behind them.

pub mod args;
pub mod commands;

pub use args::Cli;
pub use commands::{run, CliError};
