//! Command-line front end: configuration, run layout and the pipeline steps.

pub mod commands;
pub mod config;
pub mod pipeline;
