//! Benchmark harness: datasets, prior training, evaluation, ablations and
//! exploration maps. The `expose` binary is a thin CLI over this library.

pub mod ablate;
pub mod config;
pub mod data;
pub mod eval;
pub mod render;
pub mod train;

pub use config::{ConfigError, RunConfig};
pub use data::EnvKind;
pub use eval::{evaluate, run_episode, Episode, ExperimentResult, CSV_HEADER};
