//! Command-line driver for the `streamvb` solvers: CSV ingestion, model
//! configuration, the warm-up protocol, output files and snapshots.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod design;
pub mod error;
pub mod ingest;
pub mod output;
pub mod run;
pub mod simulate;
pub mod snapshot;

pub use error::CliError;
