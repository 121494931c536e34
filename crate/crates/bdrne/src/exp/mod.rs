//! Configuration-driven experiment runner: ε sweeps, data-size sweeps,
//! cost-sensitivity sweeps, and model-variant comparisons, with
//! deterministic CSV/JSON emission.

pub mod config;
pub mod emit;
pub mod study;

pub use config::{load_config, ExperimentConfig};
pub use emit::emit_results;
pub use study::{recertify, run_study, run_study_filtered, ResultRow, StudyError, StudyFilters};
