//! Declarative scenario runner: configuration, execution and artifacts.

mod config;
mod output;
mod runner;

pub use config::{
    CheckParams, DeviceParams, EstimateParams, ExperimentSpec, InversionParams,
    LambdaSweepParams, NormChoice, Scenario, ScalingParams, SolverParams, SparseSuiteParams,
    TransientParams, Variant,
};
pub use output::{emit_outputs, records_csv, RECORD_COLUMNS, SCHEMA_VERSION};
pub use runner::{
    cg_work, eigen_identity_gap, envelope_fit, gain_inequality_holds, loglog_slope,
    mean_tau_by_size, run_experiment, InverseTable, Outcome, RunRecord, INVERSE_SIGNIFICANCE,
};
