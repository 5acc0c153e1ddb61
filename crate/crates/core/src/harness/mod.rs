//! Scenario configuration, trial orchestration and result files.

pub mod config;
pub mod report;
pub mod run;

pub use config::ScenarioConfig;
pub use report::{aggregate, audit, emit, emit_opgpa, fmt_num, read_records, render_summary, Summary};
pub use run::{draw, opgpa_groups, opgpa_sweep, run_scenario, run_trial, trial_seed, OpgpaRow, RecordKind, RunOutput, RunRecord};
