//! Deterministic, tick-based simulator for scheduling data pipelines as
//! ephemeral cloud functions over fixed resource pools.
//!
//! ```text
//!  config ──▶ ┌──────────┐  arrivals  ┌───────────┐  assignments  ┌──────────┐
//!             │ Workload │ ─────────▶ │ Scheduler │ ────────────▶ │ Executor │
//!             └──────────┘            └───────────┘ ◀──────────── └──────────┘
//!                                                     failures         │
//!                                                                      ▼
//!                                                                  Metrics
//! ```
//!
//! Each loop iteration is one 10 µs tick. Schedulers are registered under a
//! string key and selected by the config's `scheduling_algo`.

pub mod cli;
pub mod clock;
pub mod config;
pub mod engine;
pub mod executor;
pub mod metrics;
pub mod rng;
pub mod scheduler;
pub mod workload;

pub use clock::{ticks_from_duration, Tick, TICKS_PER_SECOND};
pub use config::{load_config, ConfigError, SimConfig};
pub use engine::{replay_isolated, run_simulation, run_simulation_with, SimError, Simulation};
pub use executor::{Assignment, ContainerId, Failure, Grant, PoolId};
pub use metrics::{compare_to_trace, SimulationReport};
pub use scheduler::{register_scheduler, SchedulerRegistry, SchedulerState, StepOutput};
pub use workload::{load_trace, operator_duration, Operator, Pipeline, PipelineId, Priority, ScalingFn};
