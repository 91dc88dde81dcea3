//! Configuration-driven experiments over the `uniform-ext` library:
//! norm tables, diagnostics and geometry figures.

pub mod config;
pub mod experiment;
pub mod svg;

pub use config::ExperimentConfig;
pub use experiment::Failure;
