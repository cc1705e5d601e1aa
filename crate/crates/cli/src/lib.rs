//! File formats and configuration for the `coevolve` command-line tool.
//!
//! The binary in this crate drives the core engine; everything that touches
//! the filesystem lives here, behind the formats documented in the README:
//! event CSV with a JSON metadata sidecar, JSON checkpoints with bit-exact
//! parameter round-trips, training trace CSV, and metrics JSON/CSV.

pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, ExitCode};
