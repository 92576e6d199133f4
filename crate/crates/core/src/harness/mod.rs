//! Synthetic data, configuration and experiment orchestration.

pub mod config;
pub mod data;
pub mod experiment;

pub use config::{AuxKind, ExperimentConfig, NoiseKind};
pub use experiment::{run_alpha_sweep, run_experiment, run_size_sweep, ExperimentSummary};
