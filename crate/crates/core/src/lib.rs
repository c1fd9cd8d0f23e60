//! Deterministic simulator and policy library for allocating latency-bound
//! inference tasks between a battery-powered edge device and the cloud.
//!
//! The pipeline for each arriving task is: cloud and edge admission checks
//! ([`feasibility`]), placement when both admit ([`allocator`]), warm-start
//! rescue when neither does ([`rescue`]), and execution with battery and
//! memory accounting in the event loop ([`engine`]).

pub mod allocator;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod feasibility;
pub mod metrics;
pub mod model;
pub mod rescue;
pub mod workload;

pub use allocator::{
    decide, HandlerKind, HandlerWeights, Placement, TradeoffHandler, TradeoffInputs,
};
pub use config::{load_config, SimConfig};
pub use engine::{admit, simulate, simulate_detailed, Policy, Scenario, SimRun};
pub use feasibility::{cloud_feasible, edge_feasible, CheckerKind};
pub use metrics::{aggregate, compare, RunReport};
pub use model::{
    AppProfile, Decision, EdgeState, Energy, FeasibilityEstimate, FeasibilityReason, Millis,
    NetworkModel, Target, Task, TaskType,
};
pub use rescue::{rescue, RescueVerdict};
