//! Experiment runner: one subcommand per experiment, each writing CSV tables
//! and a JSON manifest into an output directory.

pub mod commands;
pub mod output;

pub use commands::{Command, Context, Report};
