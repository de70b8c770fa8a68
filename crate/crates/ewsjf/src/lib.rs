//! File formats, run configuration, CSV reports and the subcommands of the
//! `ewsjf` simulator binary. The algorithms live in [`ewsjf_core`].

pub mod commands;
pub mod config;
mod error;
pub mod partition_io;
pub mod report;
pub mod trace_io;

pub use error::{Error, Result};
