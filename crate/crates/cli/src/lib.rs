//! Commands behind the `eloran-td` binary: corpus generation, ingestion,
//! grid maps, correlation screening, training, prediction, evaluation and
//! LASSO sweeps.

pub mod commands;
pub mod config;
mod error;
pub mod svg;

pub use error::CliError;
