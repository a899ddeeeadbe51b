//! Config-driven experiment runner: one JSON file names the subjects,
//! paradigms, voxel selections and analyses; the runner expands it into
//! tasks and writes a report.

pub mod app;
pub mod config;
pub mod error;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use runner::{execute, load_subjects, plan, Stage};
