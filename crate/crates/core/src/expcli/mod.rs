//! Experiment runner: TOML configuration, deterministic execution over a
//! worker pool, per-metric CSV tables, a JSON summary, and merging of
//! finished runs into an acceptance table.

mod config;
mod experiments;
mod report;

pub use config::*;
pub use experiments::{random_word, run};
pub use report::*;
