//! Std companion to `gfcn-core`: dataset directories and other file
//! formats, multi-seed experiments and sweeps, and the `gfcn` command line.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;

pub use experiment::{ExperimentConfig, ExperimentSummary, ModelKind, RunSpec, SweepParam};
pub use io::{load_dataset, save_dataset, DataError};
