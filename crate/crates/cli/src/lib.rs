//! Command-line orchestration for hartree-lab: configuration, subcommands
//! and the acceptance suite.

pub mod acceptance;
pub mod commands;
pub mod config;
