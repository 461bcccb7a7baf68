//! Scenario files, run orchestration and artifact export for the
//! `alpha-measure` command-line tool.

pub mod config;
pub mod export;
pub mod expr;
pub mod run;
pub mod scenario;

pub use config::{load_scenario, ConfigError, ScenarioConfig, Task};
pub use export::{export_field, import_field, FieldFormat};
pub use run::{describe_plan, plan, refine, run, suite_tasks, RunSummary, TaskRecord, TaskStatus};
pub use scenario::Scenario;

/// Environment variable that overrides the worker thread count.
pub const THREADS_ENV: &str = "ALPHA_MEASURE_THREADS";
