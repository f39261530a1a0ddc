//! Experiment harness: configuration files, replicated runs, table
//! reproduction and theory-versus-simulation comparison.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod tables;

pub use compare::{compare_theory_mc, ComparisonReport, ComparisonRow};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, theory_limit, write_outputs, ExperimentError, ExperimentResult, SummaryRow};
pub use tables::{reproduce_table, TableOptions, TableReport};

/// Overrides the output directory when `--out` is not given.
pub const OUTPUT_DIR_ENV: &str = "FINREP_OUTPUT_DIR";
