//! Experiment harness: TOML configs, parallel trial execution, per-trial
//! JSON records and aggregated CSV summaries.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod record;
pub mod report;
pub mod runner;

pub use config::{Condition, ExperimentConfig, ExperimentKind};
pub use error::{HarnessError, Result};
pub use record::{load_records, TrialRecord};
pub use report::{aggregate, report_dir, SummaryRow};
pub use runner::{run_experiment, ExperimentRun, Overrides, RunOptions};
