//! QoS-aware autoscaling of replicated Web Services.
//!
//! An open multiclass queueing-network model ([`qn`]) predicts per-class
//! response times for any instance allocation. The [`planner`] uses it to
//! grow and then shrink the allocation so that every class meets its SLA
//! with as few instances as the greedy search finds. [`telemetry`],
//! [`workload`] and [`sim`] reproduce the monitoring loop and experiments,
//! and [`sim::des`] checks the model against an event-level simulation.

pub mod cli;
pub mod error;
pub mod planner;
pub mod qn;
pub mod seed;
pub mod sim;
pub mod telemetry;
pub mod workload;

pub use error::{QnError, Result};
pub use planner::{plan_step, PlanOutcome, Planner, SlaThresholds};
pub use qn::{
    capacity_floor, min_feasible_config, predict_response, rescale_snapshot, ArrivalRates,
    BaselineSnapshot, Configuration, DemandMatrix, ResponseTimes, UtilizationVector,
};
