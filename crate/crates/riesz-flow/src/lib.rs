//! File formats, run orchestration and the command-line driver for
//! [`riesz_flow_core`].
//!
//! A run is described by a flat TOML [`config::RunConfig`]. Executing it
//! writes a self-describing directory: `diagnostics.csv`, snapshot fields,
//! `manifest.toml` (which can be fed back to `run --config`), and
//! `blowup.report` when a blow-up was analysed.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod presets;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, Result};
