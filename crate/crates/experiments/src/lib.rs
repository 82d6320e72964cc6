//! Experiment runner: configs, presets, training and oracle runs, sweeps and
//! reports.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod report;
pub mod run;
pub mod seeds;
pub mod stats;
pub mod sweep;

pub use config::{ExperimentConfig, Mode};
pub use error::{ExpError, Result};
pub use report::{report, Report, ReportStatus};
pub use run::{run, PolicyFile, RunOptions, Summary};
pub use stats::moving_average;
pub use sweep::{sweep, SweepOutcome};
