//! Command-line front end for `gradvoc-core`: WAV stretching, diagnostic
//! exports, test-signal generation and the acceptance checks.

pub mod acceptance;
mod commands;
pub mod diag;
pub mod error;
pub mod wav;

pub use commands::{run, CliConfig};
pub use error::{CliError, CliResult};
pub use wav::{read_wav, write_wav, Audio, BitDepth};
