//! Event log, utilization samples, per-pipeline records, and the report.

mod compare;
mod report;

pub use compare::{compare_runtimes, compare_to_trace, percent_error, ComparisonRow, ComparisonTable};
pub use report::{LatencyStats, PoolUtilization, SimulationReport, Summary};

use crate::clock::Tick;
use crate::config::SimConfig;
use crate::executor::{Container, ContainerId, Failure, Grant, PoolId, ResourcePool};
use crate::workload::{PipelineId, Priority};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("event at tick {got} recorded after tick {last}")]
    OutOfOrderTick { last: Tick, got: Tick },
    #[error("report does not reconcile: {0}")]
    Reconciliation(String),
    #[error("pipeline {0} has no simulated runtime to compare")]
    MissingPipeline(PipelineId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrived,
    ContainerCreated,
    /// A container finished but its pipeline still has operators left.
    ContainerCompleted,
    Completed,
    Oom,
    Preempted,
    TerminalFailure,
    Unfinished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Event {
    pub tick: Tick,
    pub kind: EventKind,
    pub pipeline_id: PipelineId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub container_id: Option<ContainerId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_id: Option<PoolId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grant: Option<Grant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
}

impl Event {
    fn bare(tick: Tick, kind: EventKind, pipeline_id: PipelineId) -> Self {
        Self {
            tick,
            kind,
            pipeline_id,
            container_id: None,
            pool_id: None,
            grant: None,
            priority: None,
        }
    }

    fn for_container(tick: Tick, kind: EventKind, c: &Container) -> Self {
        Self {
            container_id: Some(c.container_id),
            pool_id: Some(c.pool_id),
            grant: Some(c.grant()),
            ..Self::bare(tick, kind, c.pipeline_id)
        }
    }

    pub fn arrived(tick: Tick, pipeline_id: PipelineId, priority: Priority) -> Self {
        Self {
            priority: Some(priority),
            ..Self::bare(tick, EventKind::Arrived, pipeline_id)
        }
    }

    pub fn container_created(tick: Tick, c: &Container) -> Self {
        Self::for_container(tick, EventKind::ContainerCreated, c)
    }

    pub fn container_completed(tick: Tick, c: &Container) -> Self {
        Self::for_container(tick, EventKind::ContainerCompleted, c)
    }

    pub fn completed(tick: Tick, c: &Container) -> Self {
        Self::for_container(tick, EventKind::Completed, c)
    }

    pub fn preempted(tick: Tick, c: &Container) -> Self {
        Self::for_container(tick, EventKind::Preempted, c)
    }

    pub fn oom(tick: Tick, f: &Failure) -> Self {
        Self {
            container_id: Some(f.container_id),
            pool_id: Some(f.pool_id),
            grant: Some(f.grant()),
            ..Self::bare(tick, EventKind::Oom, f.pipeline_id)
        }
    }

    pub fn terminal_failure(tick: Tick, pipeline_id: PipelineId, grant: Option<Grant>) -> Self {
        Self {
            grant,
            ..Self::bare(tick, EventKind::TerminalFailure, pipeline_id)
        }
    }

    pub fn unfinished(tick: Tick, pipeline_id: PipelineId) -> Self {
        Self::bare(tick, EventKind::Unfinished, pipeline_id)
    }

    fn requires_container(&self) -> bool {
        matches!(
            self.kind,
            EventKind::ContainerCreated
                | EventKind::ContainerCompleted
                | EventKind::Completed
                | EventKind::Oom
                | EventKind::Preempted
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UtilizationSample {
    pub tick: Tick,
    pub pool_id: PoolId,
    pub cpu_allocated: u64,
    pub cpu_capacity: u64,
    pub ram_allocated: u64,
    pub ram_capacity: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineState {
    Queued,
    Running,
    Completed,
    TerminalFailure,
    Unfinished,
}

/// Lifecycle of one pipeline as reconstructed from the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineRecord {
    pub pipeline_id: PipelineId,
    pub priority: Priority,
    pub arrival_tick: Tick,
    pub first_assignment_tick: Option<Tick>,
    pub first_start_tick: Option<Tick>,
    pub completion_tick: Option<Tick>,
    pub terminal_tick: Option<Tick>,
    pub unfinished_tick: Option<Tick>,
    /// OOM failures (each one is followed by a retry or a terminal failure).
    pub retries: u32,
    pub preemptions: u32,
    pub containers: u32,
    pub live_containers: u32,
    /// Live containers when the horizon was reached; zero means it was still queued.
    pub live_at_end: u32,
}

impl PipelineRecord {
    fn new(pipeline_id: PipelineId, priority: Priority, arrival_tick: Tick) -> Self {
        Self {
            pipeline_id,
            priority,
            arrival_tick,
            first_assignment_tick: None,
            first_start_tick: None,
            completion_tick: None,
            terminal_tick: None,
            unfinished_tick: None,
            retries: 0,
            preemptions: 0,
            containers: 0,
            live_containers: 0,
            live_at_end: 0,
        }
    }

    pub fn state(&self) -> PipelineState {
        if self.completion_tick.is_some() {
            PipelineState::Completed
        } else if self.terminal_tick.is_some() {
            PipelineState::TerminalFailure
        } else if self.unfinished_tick.is_some() {
            PipelineState::Unfinished
        } else if self.live_containers > 0 {
            PipelineState::Running
        } else {
            PipelineState::Queued
        }
    }

    /// Completion minus arrival, queueing included.
    pub fn latency(&self) -> Option<u64> {
        self.completion_tick.map(|c| c.0 - self.arrival_tick.0)
    }

    /// Completion minus the start of the first container, retries included.
    pub fn runtime_ticks(&self) -> Option<u64> {
        Some(self.completion_tick?.0 - self.first_start_tick?.0)
    }

    fn is_closed(&self) -> bool {
        self.completion_tick.is_some() || self.terminal_tick.is_some() || self.unfinished_tick.is_some()
    }
}

/// Append-only sink for the engine's events and samples.
#[derive(Debug, Default, Clone)]
pub struct MetricsRecorder {
    events: Vec<Event>,
    samples: Vec<UtilizationSample>,
    records: BTreeMap<PipelineId, PipelineRecord>,
    violations: Vec<String>,
}

impl MetricsRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn samples(&self) -> &[UtilizationSample] {
        &self.samples
    }

    pub fn record(&self, id: PipelineId) -> Option<&PipelineRecord> {
        self.records.get(&id)
    }

    pub fn records(&self) -> &BTreeMap<PipelineId, PipelineRecord> {
        &self.records
    }

    pub fn record_event(&mut self, e: Event) -> Result<(), MetricsError> {
        if let Some(last) = self.events.last() {
            if e.tick < last.tick {
                return Err(MetricsError::OutOfOrderTick {
                    last: last.tick,
                    got: e.tick,
                });
            }
        }
        if e.requires_container() && (e.container_id.is_none() || e.grant.is_none()) {
            self.violations
                .push(format!("{:?} event for pipeline {} lacks container fields", e.kind, e.pipeline_id));
        }
        self.apply(&e);
        self.events.push(e);
        Ok(())
    }

    fn apply(&mut self, e: &Event) {
        if e.kind == EventKind::Arrived {
            if self.records.contains_key(&e.pipeline_id) {
                self.violations.push(format!("pipeline {} arrived twice", e.pipeline_id));
                return;
            }
            let priority = e.priority.unwrap_or(Priority::Batch);
            self.records
                .insert(e.pipeline_id, PipelineRecord::new(e.pipeline_id, priority, e.tick));
            return;
        }
        let Some(r) = self.records.get_mut(&e.pipeline_id) else {
            self.violations
                .push(format!("{:?} event for pipeline {} without a prior arrival", e.kind, e.pipeline_id));
            return;
        };
        if r.is_closed() {
            self.violations.push(format!(
                "{:?} event for pipeline {} after it reached a final state",
                e.kind, e.pipeline_id
            ));
            return;
        }
        let retire = |r: &mut PipelineRecord, violations: &mut Vec<String>| {
            if r.live_containers == 0 {
                violations.push(format!("{:?} for pipeline {} with no live container", e.kind, e.pipeline_id));
            } else {
                r.live_containers -= 1;
            }
        };
        match e.kind {
            EventKind::Arrived => unreachable!(),
            EventKind::ContainerCreated => {
                r.containers += 1;
                r.live_containers += 1;
                if r.first_assignment_tick.is_none() {
                    r.first_assignment_tick = Some(e.tick);
                    r.first_start_tick = Some(e.tick.next());
                }
            }
            EventKind::ContainerCompleted => retire(r, &mut self.violations),
            EventKind::Completed => {
                retire(r, &mut self.violations);
                r.completion_tick = Some(e.tick);
            }
            EventKind::Oom => {
                retire(r, &mut self.violations);
                r.retries += 1;
            }
            EventKind::Preempted => {
                retire(r, &mut self.violations);
                r.preemptions += 1;
            }
            EventKind::TerminalFailure => r.terminal_tick = Some(e.tick),
            EventKind::Unfinished => {
                r.live_at_end = r.live_containers;
                r.unfinished_tick = Some(e.tick);
            }
        }
    }

    /// One sample per pool.
    pub fn sample_utilization(&mut self, tick: Tick, pools: &[ResourcePool]) {
        self.samples.extend(pools.iter().map(|p| UtilizationSample {
            tick,
            pool_id: p.pool_id,
            cpu_allocated: p.cpu_allocated,
            cpu_capacity: p.cpu_capacity,
            ram_allocated: p.ram_allocated,
            ram_capacity: p.ram_capacity,
        }));
    }

    /// Closes out open pipelines as unfinished, checks the log reconciles,
    /// and builds the report.
    pub fn finalize(mut self, end_tick: Tick, config: SimConfig) -> Result<SimulationReport, MetricsError> {
        let open: Vec<PipelineId> = self
            .records
            .values()
            .filter(|r| !r.is_closed())
            .map(|r| r.pipeline_id)
            .collect();
        for id in open {
            self.record_event(Event::unfinished(end_tick, id))?;
        }
        if !self.violations.is_empty() {
            return Err(MetricsError::Reconciliation(self.violations.join("; ")));
        }
        self.reconcile()?;
        Ok(SimulationReport::build(config, end_tick, self.events, self.samples, self.records))
    }

    fn reconcile(&self) -> Result<(), MetricsError> {
        let mut arrived = 0usize;
        let mut closed = 0usize;
        let mut per_kind: BTreeMap<PipelineId, (u32, u32, u32)> = BTreeMap::new();
        for e in &self.events {
            let slot = per_kind.entry(e.pipeline_id).or_default();
            match e.kind {
                EventKind::Arrived => arrived += 1,
                EventKind::Completed | EventKind::TerminalFailure | EventKind::Unfinished => closed += 1,
                EventKind::Oom => slot.0 += 1,
                EventKind::Preempted => slot.1 += 1,
                EventKind::ContainerCreated => slot.2 += 1,
                EventKind::ContainerCompleted => {}
            }
        }
        if arrived != self.records.len() || closed != arrived {
            return Err(MetricsError::Reconciliation(format!(
                "{arrived} arrivals, {} records, {closed} final states",
                self.records.len()
            )));
        }
        for (id, r) in &self.records {
            let (oom, pre, created) = per_kind.get(id).copied().unwrap_or_default();
            if (r.retries, r.preemptions, r.containers) != (oom, pre, created) {
                return Err(MetricsError::Reconciliation(format!("pipeline {id} counters disagree with its events")));
            }
            if r.completion_tick.is_some() && r.live_containers != 0 {
                return Err(MetricsError::Reconciliation(format!(
                    "pipeline {id} completed with containers still live"
                )));
            }
        }
        for s in &self.samples {
            if s.cpu_allocated > s.cpu_capacity || s.ram_allocated > s.ram_capacity {
                return Err(MetricsError::Reconciliation(format!(
                    "pool {} over capacity at tick {}",
                    s.pool_id, s.tick
                )));
            }
        }
        Ok(())
    }
}
