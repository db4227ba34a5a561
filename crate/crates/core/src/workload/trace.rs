//! Line-delimited JSON traces: one pipeline per line.
//!
//! ```text
//! {"arrival_tick":0,"priority":"batch","operators":[{"id":0,"parents":[],"ram_mib":1024,"base_ticks":1000,"scaling":{"kind":"linear"}}]}
//! ```
//!
//! Rows may carry `observed_ticks`, a measured runtime used by `compare`.
//! Blank lines and lines starting with `#` are skipped. Pipeline ids are
//! assigned in arrival order after a stable sort.

use super::{Operator, OperatorId, Pipeline, PipelineId, Priority, ScalingFn};
use crate::clock::Tick;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("could not read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trace parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace line {line}: {message}")]
    InvariantViolation { line: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScaling {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    id: OperatorId,
    #[serde(default)]
    parents: Vec<OperatorId>,
    ram_mib: u64,
    base_ticks: u64,
    scaling: RawScaling,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    arrival_tick: u64,
    priority: String,
    operators: Vec<RawOperator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    observed_ticks: Option<f64>,
}

/// One parsed trace row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 1-based source line.
    pub line: usize,
    pub pipeline: Pipeline,
    pub observed_ticks: Option<f64>,
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<Pipeline>, TraceError> {
    Ok(load_trace_records(path)?
        .into_iter()
        .map(|r| r.pipeline)
        .collect())
}

pub fn load_trace_records(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>, TraceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let raw: RawPipeline = serde_json::from_str(trimmed).map_err(|e| TraceError::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push(convert(raw, line)?);
    }
    records.sort_by_key(|r| r.pipeline.arrival_tick);
    for (i, r) in records.iter_mut().enumerate() {
        r.pipeline.id = PipelineId(i as u64);
    }
    Ok(records)
}

fn convert(raw: RawPipeline, line: usize) -> Result<TraceRecord, TraceError> {
    let violation = |message: String| TraceError::InvariantViolation { line, message };
    let priority: Priority = raw.priority.parse().map_err(violation)?;
    let mut operators = Vec::with_capacity(raw.operators.len());
    for op in raw.operators {
        let scaling = match (op.scaling.kind.as_str(), op.scaling.f) {
            ("constant", None) => ScalingFn::Constant,
            ("linear", None) => ScalingFn::Linear,
            ("amdahl", Some(f)) => ScalingFn::Amdahl(f),
            ("amdahl", None) => {
                return Err(violation(format!("operator {}: amdahl scaling requires `f`", op.id)))
            }
            ("constant" | "linear", Some(_)) => {
                return Err(violation(format!(
                    "operator {}: `f` is only valid for amdahl scaling",
                    op.id
                )))
            }
            (other, _) => {
                return Err(violation(format!("operator {}: unknown scaling kind `{other}`", op.id)))
            }
        };
        operators.push(Operator {
            id: op.id,
            parents: op.parents,
            ram_mib: op.ram_mib,
            base_ticks: op.base_ticks,
            scaling,
        });
    }
    if let Some(obs) = raw.observed_ticks {
        if !obs.is_finite() || obs <= 0.0 {
            return Err(violation(format!("observed_ticks must be positive (got {obs})")));
        }
    }
    let pipeline = Pipeline {
        id: PipelineId(0),
        arrival_tick: Tick(raw.arrival_tick),
        priority,
        operators,
    };
    pipeline.validate().map_err(violation)?;
    Ok(TraceRecord {
        line,
        pipeline,
        observed_ticks: raw.observed_ticks,
    })
}

/// Serializes pipelines in the trace format, optionally with observed runtimes.
pub fn write_trace<'a>(rows: impl IntoIterator<Item = (&'a Pipeline, Option<f64>)>) -> String {
    let mut out = String::new();
    for (p, observed) in rows {
        let raw = RawPipeline {
            arrival_tick: p.arrival_tick.0,
            priority: p.priority.as_str().to_string(),
            operators: p
                .operators
                .iter()
                .map(|o| RawOperator {
                    id: o.id,
                    parents: o.parents.clone(),
                    ram_mib: o.ram_mib,
                    base_ticks: o.base_ticks,
                    scaling: RawScaling {
                        kind: o.scaling.kind().to_string(),
                        f: o.scaling.serial_fraction(),
                    },
                })
                .collect(),
            observed_ticks: observed,
        };
        out.push_str(&serde_json::to_string(&raw).expect("trace rows serialize"));
        out.push('\n');
    }
    out
}
