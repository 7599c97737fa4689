//! Command-line surface over `hpf-core`: an expression language for input
//! functions, versioned verification reports and the `verify-all` suite.

pub mod commands;
pub mod expr;
pub mod report;
pub mod suite;

pub use commands::{run, Cli, CliError};
pub use report::{Record, Report, Status};
pub use suite::verify_all;
