//! Standard-library companion to `dits-core`: CSV ingestion, run
//! configuration, checkpoints, forecast and report files, and the commands
//! behind the `dits` binary.

pub mod artifacts;
pub mod checkpoint;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;

pub use dits_core;
pub use error::{Error, Result};
