//! Command-line front end: `pg-limits gradient|certificate|figure1|sweep`.
//!
//! Exit codes: 0 success (vacuous certificates included), 2 invalid input,
//! 3 failed mathematical precondition, 4 I/O failure.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod schema;

pub use args::Cli;
pub use commands::run;
pub use error::{CliError, CliResult};
