//! Experiments and file-level commands on top of the `ssnb` library.

pub mod bench;
pub mod color;
pub mod commands;
pub mod error;
pub mod report;
pub mod sampling;
pub mod semiball;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
