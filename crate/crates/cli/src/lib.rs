//! Pipeline wiring for the `cap` binary: configuration, synthetic datasets
//! and the subcommands.

pub mod commands;
pub mod config;
pub mod fixture;
pub mod output;
