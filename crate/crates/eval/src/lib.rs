//! Evaluation side of the testbed: corpus-derived objective thresholds,
//! attack metrics, the keyword-stuffing baseline, the revenue model and the
//! staged experiment pipeline behind the `mawseo` command.

pub mod config;
pub mod error;
pub mod keyword;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod revenue;
pub mod run;
pub mod thresholds;

pub use config::ExperimentConfig;
pub use error::{EvalError, Result};
pub use metrics::{compute_metrics, rank_level_report, MetricsReport, RankLevelRow};
pub use pipeline::Pipeline;
pub use run::{RunDir, Stage};
pub use thresholds::{compute_thresholds, Thresholds};
