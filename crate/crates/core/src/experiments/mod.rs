//! Scenario configuration, runners and report emission behind the CLI.

pub mod config;
pub mod report;
pub mod scenarios;

pub use config::{ExperimentConfig, InitialSpec, Scenario};
pub use report::{emit_report, Cell, Check, ExperimentReport, ReportFormat, Table};
pub use scenarios::{
    run, run_commutator, run_hypothesis_check, run_lemma_sweep, run_negative_example, run_selection_experiment,
    run_simulate, run_stability,
};
