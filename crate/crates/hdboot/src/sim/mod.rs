//! Scenario configs, data-generating processes, and Monte Carlo
//! experiments with serialized reports.

pub mod config;
pub mod dgp;
pub mod experiments;
pub mod report;

pub use config::{DgpConfig, ExperimentKind, ScenarioConfig, SignalConfig};
pub use dgp::DgpSampler;
pub use experiments::{
    experiment_coverage, experiment_fwer, experiment_pp, experiment_rate, run_experiment,
    ExperimentOutput,
};
pub use report::{proportion_se, CellReport, MCReport, PpRow, PpTable};
