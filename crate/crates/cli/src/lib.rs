//! Library surface of the experiment runner: configuration, artifact
//! output, and subcommand orchestration. The `ergodiff` binary is a thin
//! argument-parsing shell over these modules.

pub mod commands;
pub mod config;
pub mod output;
