//! Dataset generation, experiment orchestration and reports.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;
pub mod suite;

pub use config::Config;
