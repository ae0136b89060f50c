//! Configured experiments: TOML configuration, sweeps over seeds and one
//! scenario axis, noise calibration, and CSV/JSON result files.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{
    CalibrationConfig, ExperimentConfig, GainConfig, RunConfig, ScenarioConfig, Scheme, SweepAxis, SweepConfig,
};
pub use runner::{
    calibrate_noise, compute_gap, convergence_report, gain_patterns, pair_gaps, prepare, run_grid, solve_scenario,
    summarize, Calibration, ConvergenceRow, GainPattern, GapRecord, Outcome, RunRecord, SummaryRow,
};
