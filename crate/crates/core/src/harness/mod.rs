//! Experiment configuration and command implementations.

pub mod check;
pub mod commands;
pub mod config;
pub mod store;

pub use check::{cmd_check, CheckReport, Fault, Status};
pub use commands::{cmd_invert, cmd_rates, cmd_simulate, invert, Inversion, Setup, SimulateSummary};
pub use config::ExperimentConfig;
