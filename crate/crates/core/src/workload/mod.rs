//! Pipelines, operators, and where they come from: the synthetic generator
//! or a replayed trace.

mod generator;
pub mod trace;

pub use generator::{GeneratorParams, WorkloadGenerator};
pub use trace::{load_trace, load_trace_records, parse_trace, write_trace, TraceError, TraceRecord};

use crate::clock::Tick;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

/// CPU allocation, in millicores, at which `Operator::base_ticks` is measured.
pub const REFERENCE_CPU_MILLICORES: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PipelineId(pub u64);

impl fmt::Display for PipelineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type OperatorId = u32;

/// Ascending priority: batch < iterative < interactive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Priority {
    Batch = 0,
    Iterative = 1,
    #[serde(alias = "query")]
    Interactive = 2,
}

impl Priority {
    pub const ALL: [Priority; 3] = [Priority::Batch, Priority::Iterative, Priority::Interactive];

    pub fn level(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Priority::Batch => "batch",
            Priority::Iterative => "iterative",
            Priority::Interactive => "interactive",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Priority {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "batch" => Ok(Priority::Batch),
            "iterative" => Ok(Priority::Iterative),
            // "query" is the older spelling of the top level.
            "interactive" | "query" => Ok(Priority::Interactive),
            other => Err(format!("unknown priority `{other}`")),
        }
    }
}

/// How an operator's runtime responds to extra CPU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingFn {
    Constant,
    Linear,
    /// Serial fraction `f` in [0, 1].
    Amdahl(f64),
}

impl ScalingFn {
    pub fn kind(&self) -> &'static str {
        match self {
            ScalingFn::Constant => "constant",
            ScalingFn::Linear => "linear",
            ScalingFn::Amdahl(_) => "amdahl",
        }
    }

    pub fn serial_fraction(&self) -> Option<f64> {
        match self {
            ScalingFn::Amdahl(f) => Some(*f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub id: OperatorId,
    pub parents: Vec<OperatorId>,
    /// Peak RAM the operator touches while running.
    pub ram_mib: u64,
    /// Runtime at the 1000-millicore reference allocation.
    pub base_ticks: u64,
    pub scaling: ScalingFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("operator duration requested with zero CPU")]
pub struct ZeroCpu;

impl Operator {
    pub fn duration_at(&self, cpu_millicores: u64) -> Result<u64, ZeroCpu> {
        operator_duration(self, cpu_millicores)
    }
}

/// Ticks `op` needs when granted `cpu` millicores. Always at least one tick.
pub fn operator_duration(op: &Operator, cpu: u64) -> Result<u64, ZeroCpu> {
    if cpu == 0 {
        return Err(ZeroCpu);
    }
    let base = op.base_ticks;
    let ticks = match op.scaling {
        ScalingFn::Constant => base,
        ScalingFn::Linear => {
            let num = base as u128 * REFERENCE_CPU_MILLICORES as u128;
            num.div_ceil(cpu as u128) as u64
        }
        ScalingFn::Amdahl(f) => {
            let speedup = REFERENCE_CPU_MILLICORES as f64 / cpu as f64;
            ceil_tolerant(base as f64 * (f + (1.0 - f) * speedup))
        }
    };
    Ok(ticks.max(1))
}

// Values within rounding noise of an integer are not bumped to the next one.
fn ceil_tolerant(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub id: PipelineId,
    pub arrival_tick: Tick,
    pub priority: Priority,
    /// Topologically indexed: `operators[i].id == i` and every parent id is smaller.
    pub operators: Vec<Operator>,
}

impl Pipeline {
    pub fn operator_ids(&self) -> Vec<OperatorId> {
        self.operators.iter().map(|o| o.id).collect()
    }

    pub fn max_ram_mib(&self) -> u64 {
        self.operators.iter().map(|o| o.ram_mib).max().unwrap_or(0)
    }

    /// Checks the structural invariants shared by generated and loaded pipelines.
    pub fn validate(&self) -> Result<(), String> {
        if self.operators.is_empty() {
            return Err("pipeline has no operators".into());
        }
        for (idx, op) in self.operators.iter().enumerate() {
            if op.id as usize != idx {
                return Err(format!("operator at position {idx} has id {} (ids must be dense 0..n-1)", op.id));
            }
            if idx == 0 && !op.parents.is_empty() {
                return Err("operator 0 must not have parents".into());
            }
            for (k, &p) in op.parents.iter().enumerate() {
                if p >= op.id {
                    return Err(format!("operator {} lists parent {p}, which is not an earlier operator", op.id));
                }
                if op.parents[..k].contains(&p) {
                    return Err(format!("operator {} lists parent {p} twice", op.id));
                }
            }
            if op.ram_mib < 1 {
                return Err(format!("operator {} has zero RAM", op.id));
            }
            if op.base_ticks < 1 {
                return Err(format!("operator {} has zero base_ticks", op.id));
            }
            if let ScalingFn::Amdahl(f) = op.scaling {
                if !(0.0..=1.0).contains(&f) {
                    return Err(format!("operator {} has serial fraction {f} outside [0, 1]", op.id));
                }
            }
        }
        Ok(())
    }
}

/// Source of arrivals polled once per tick by the engine.
#[derive(Debug)]
pub enum Workload {
    Synthetic(Box<WorkloadGenerator>),
    Trace(VecDeque<Pipeline>),
}

impl Workload {
    pub fn from_trace(mut pipelines: Vec<Pipeline>) -> Self {
        pipelines.sort_by_key(|p| (p.arrival_tick, p.id));
        Workload::Trace(pipelines.into())
    }

    /// Pipelines arriving at `tick`. Usually empty.
    pub fn poll(&mut self, tick: Tick) -> Vec<Pipeline> {
        match self {
            Workload::Synthetic(generator) => generator.poll(tick),
            Workload::Trace(queue) => {
                let mut out = Vec::new();
                while queue.front().is_some_and(|p| p.arrival_tick <= tick) {
                    out.extend(queue.pop_front());
                }
                out
            }
        }
    }
}
