//! Command-line front end: configuration, CSV ingestion, artifact writing and
//! the subcommands behind the `dirquant` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use commands::{run, RunOutcome};
pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
