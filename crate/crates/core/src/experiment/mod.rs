//! Scenario configuration, synthetic populations, runs and reports.

pub mod config;
pub mod report;
pub mod run;
pub mod synthetic;

pub use config::{load_config, ReportFormat, ScenarioConfig};
pub use report::{read_report, write_report, ReportRow, RunReport, RunSummary};
pub use run::{estimation_error, run_experiment, sweep_adoption, ErrorMetrics, SweepSpec};
