//! Command-line front end: one JSON configuration with `PPOSG_*`
//! environment overrides, and subcommands that write stamped artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Run, RunManifest, ServeFlags, BUILD_ID};
pub use config::{Config, ENV_PREFIX};
pub use error::CliError;
