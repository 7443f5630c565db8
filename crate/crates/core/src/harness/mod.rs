//! Configuration, seeding, runs, evaluation, and experiment suites.

pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod run;
pub mod seeding;
pub mod suite;

pub use config::{ConfigError, Preset, TrainConfig};
pub use evaluate::{evaluate, EvalResult, Split, DEFAULT_EVAL_EPISODES};
pub use metrics::{metrics_header, metrics_line, MetricsWriter, METRICS_COLUMNS};
pub use run::{resume, run, RunError, RunRecord, RunStatus, EXIT_DIVERGED, EXIT_INVALID_CONFIG};
pub use suite::{run_suite, SuiteOutcome, SuiteSpec};
