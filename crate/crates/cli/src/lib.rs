//! Experiment orchestration for the `graphop` command-line tool: TOML
//! configuration, named presets, and artifact emission.

pub mod config;
pub mod estimate;
pub mod presets;
pub mod run;

pub use config::{Model, RunConfig};
pub use estimate::{estimate_graphop, EstimateReport};
pub use presets::{preset, PRESETS};
pub use run::{run_experiment, RunOutcome, Summary};
