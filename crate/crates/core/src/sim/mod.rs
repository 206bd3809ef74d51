//! Simulation engines: the stepped control-loop harness and the
//! discrete-event oracle.

pub mod des;
pub mod harness;

pub use des::{des_validate, DesReport, DesSettings, Discipline, Estimate};
pub use harness::{
    pearson, run_scenario, DemandSpec, RunError, RunRecord, RunSummary, ScenarioSpec, SlaSpec,
    StepRecord, WorkloadSpec,
};
