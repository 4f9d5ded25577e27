//! Scenario library, random baths, JSON configuration, experiment runner
//! and result files.

pub mod bath;
pub mod config;
pub mod run;
pub mod scenarios;

pub use bath::{generate_bath, generate_positions, BathSpec};
pub use config::{ExperimentConfig, SCHEMA_VERSION};
pub use run::{
    oracle, pair_table, run_experiment, scan_pairs, scan_rows, spectrum, write_outputs, ExperimentResult, Manifest,
    ScanRow,
};
pub use scenarios::{scenario, with_bath_size, SCENARIOS};
