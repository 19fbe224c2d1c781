//! Experiment orchestration: configuration, paired policy runs, detector
//! calibration under the null and trace files.

mod config;
mod nulltest;
mod run;
mod trace;

pub use config::{ExperimentConfig, ModelConfig, Seeds};
pub use nulltest::{nulltest, NullTestReport, MIN_NULL_TRIALS};
pub use run::{Channel, Comparison, Experiment, RunArtifacts};
pub use trace::{read_trace, validate_rows, validate_trace, write_trace, RunSummary, TraceReport, TraceRow};
