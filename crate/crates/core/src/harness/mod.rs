//! Data ingestion, synthetic data, replicated experiments and Monte Carlo
//! validation behind the `twostage` binary.

pub mod config;
pub mod experiment;
pub mod io;
pub mod synth;
pub mod validate;
