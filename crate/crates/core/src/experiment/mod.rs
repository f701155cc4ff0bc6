//! Scenario files, experiment orchestration and CSV output.
//!
//! A scenario file is TOML with one `[[scenario]]` table per experiment; see
//! `configs/` at the repository root for the three torus studies. Unknown
//! keys anywhere in the file are rejected.

mod config;
mod run;

pub use config::{
    load_config, parse_config, ConfigError, ConfigFile, CostSpec, Level, MeasureSpec, ScenarioSpec, SinkhornSpec,
    SolverSpec,
};
pub use run::{
    convergence_study, run_scenario, run_scenarios, run_studies, solve_one, write_classifier_csv, write_summary_csv,
    Overrides, RunError, RunRecord, StudyRow, CLASSIFIER_HEADER, STUDY_HEADER, SUMMARY_HEADER,
};
