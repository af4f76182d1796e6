//! Experiment layer: configuration, presets, initial fields, the fine to
//! coarse pipeline, error metrics and artifact persistence.

pub mod config;
pub mod init;
pub mod io;
pub mod metrics;
pub mod presets;
pub mod runner;

pub use config::ExperimentConfig;
pub use presets::{list_presets, load_preset};
pub use runner::{run_experiment, run_to_dir, ExperimentResult};
