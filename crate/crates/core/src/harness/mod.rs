//! Experiment harness behind the command-line tool: configuration, runs,
//! rendering, reports, and self-checks.

pub mod check;
pub mod config;
pub mod render;
pub mod report;
pub mod run;

pub use config::{Method, RunConfig};
