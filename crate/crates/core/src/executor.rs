//! Simulated resource pools and the containers running on them.
//!
//! A container's fate is decided when it is created: either it completes at
//! `start + Σ durations` or it runs out of memory one tick after its first
//! under-provisioned operator begins. `advance` only retires what is due.

use crate::clock::Tick;
use crate::workload::{operator_duration, OperatorId, Pipeline, PipelineId, Priority};
use serde::Serialize;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PoolId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ContainerId(pub u64);

impl fmt::Display for PoolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ContainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A (CPU millicores, RAM MiB) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct Grant {
    pub cpu: u64,
    pub ram: u64,
}

impl Grant {
    pub fn new(cpu: u64, ram: u64) -> Self {
        Self { cpu, ram }
    }

    pub fn fits_in(&self, cpu_available: u64, ram_available: u64) -> bool {
        self.cpu <= cpu_available && self.ram <= ram_available
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("invalid assignment for pipeline {pipeline}: {reason}")]
    InvalidAssignment { pipeline: PipelineId, reason: String },
    #[error("unknown container {0}")]
    UnknownContainer(ContainerId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResourcePool {
    pub pool_id: PoolId,
    pub cpu_capacity: u64,
    pub ram_capacity: u64,
    pub cpu_allocated: u64,
    pub ram_allocated: u64,
}

impl ResourcePool {
    pub fn cpu_available(&self) -> u64 {
        self.cpu_capacity - self.cpu_allocated
    }

    pub fn ram_available(&self) -> u64 {
        self.ram_capacity - self.ram_allocated
    }
}

/// Instruction to start one container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub pipeline_id: PipelineId,
    /// Operators to run, in ascending (topological) order.
    pub operators: Vec<OperatorId>,
    pub pool_id: PoolId,
    pub cpu: u64,
    pub ram: u64,
}

impl Assignment {
    pub fn grant(&self) -> Grant {
        Grant::new(self.cpu, self.ram)
    }

    /// Runs every operator of `pipeline` in one container.
    pub fn whole_pipeline(pipeline: &Pipeline, pool_id: PoolId, grant: Grant) -> Self {
        Self {
            pipeline_id: pipeline.id,
            operators: pipeline.operator_ids(),
            pool_id,
            cpu: grant.cpu,
            ram: grant.ram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerOutcome {
    Completes { end_tick: Tick },
    OutOfMemory { oom_tick: Tick },
}

impl ContainerOutcome {
    pub fn tick(&self) -> Tick {
        match *self {
            ContainerOutcome::Completes { end_tick } => end_tick,
            ContainerOutcome::OutOfMemory { oom_tick } => oom_tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub container_id: ContainerId,
    pub pool_id: PoolId,
    pub pipeline_id: PipelineId,
    pub priority: Priority,
    pub operators: Vec<OperatorId>,
    pub cpu: u64,
    pub ram: u64,
    pub start_tick: Tick,
    pub outcome: ContainerOutcome,
}

impl Container {
    pub fn grant(&self) -> Grant {
        Grant::new(self.cpu, self.ram)
    }

    pub fn summary(&self) -> ContainerSummary {
        ContainerSummary {
            container_id: self.container_id,
            pool_id: self.pool_id,
            pipeline_id: self.pipeline_id,
            priority: self.priority,
            cpu: self.cpu,
            ram: self.ram,
            start_tick: self.start_tick,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Oom,
}

/// A container the executor killed, handed back to the scheduler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub pipeline_id: PipelineId,
    pub container_id: ContainerId,
    pub pool_id: PoolId,
    pub operators: Vec<OperatorId>,
    /// The grant the failed container held.
    pub cpu: u64,
    pub ram: u64,
    pub reason: FailureReason,
    pub failed: bool,
}

impl Failure {
    pub fn grant(&self) -> Grant {
        Grant::new(self.cpu, self.ram)
    }
}

/// What a scheduler may see of a running container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContainerSummary {
    pub container_id: ContainerId,
    pub pool_id: PoolId,
    pub pipeline_id: PipelineId,
    pub priority: Priority,
    pub cpu: u64,
    pub ram: u64,
    pub start_tick: Tick,
}

impl ContainerSummary {
    pub fn grant(&self) -> Grant {
        Grant::new(self.cpu, self.ram)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolView {
    pub pool_id: PoolId,
    pub cpu_capacity: u64,
    pub ram_capacity: u64,
    pub cpu_available: u64,
    pub ram_available: u64,
    /// Live containers on this pool, by ascending container id.
    pub running: Vec<ContainerSummary>,
}

/// Containers retired by one call to [`Executor::advance`].
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Advance {
    pub completed: Vec<Container>,
    pub failures: Vec<Failure>,
}

#[derive(Debug)]
pub struct Executor {
    pools: Vec<ResourcePool>,
    live: BTreeMap<ContainerId, Container>,
    due: BinaryHeap<Reverse<(Tick, ContainerId)>>,
    next_container: u64,
    version: u64,
}

impl Executor {
    /// Splits the aggregate capacity evenly; remainders go to the lowest pool ids.
    pub fn new(num_pools: u32, total_cpu: u64, total_ram: u64) -> Self {
        assert!(num_pools >= 1, "at least one pool");
        let n = num_pools as u64;
        let share = |total: u64, i: u64| total / n + u64::from(i < total % n);
        let pools = (0..n)
            .map(|i| ResourcePool {
                pool_id: PoolId(i as u32),
                cpu_capacity: share(total_cpu, i),
                ram_capacity: share(total_ram, i),
                cpu_allocated: 0,
                ram_allocated: 0,
            })
            .collect();
        Self {
            pools,
            live: BTreeMap::new(),
            due: BinaryHeap::new(),
            next_container: 0,
            version: 0,
        }
    }

    pub fn pools(&self) -> &[ResourcePool] {
        &self.pools
    }

    pub fn live_containers(&self) -> impl Iterator<Item = &Container> {
        self.live.values()
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.live.get(&id)
    }

    /// Bumped whenever pool allocation changes.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn create_container(
        &mut self,
        a: &Assignment,
        pipeline: &Pipeline,
        tick: Tick,
    ) -> Result<&Container, ExecutorError> {
        let bad = |reason: String| ExecutorError::InvalidAssignment {
            pipeline: a.pipeline_id,
            reason,
        };
        if pipeline.id != a.pipeline_id {
            return Err(bad(format!("assignment names pipeline {} but got {}", a.pipeline_id, pipeline.id)));
        }
        if a.cpu == 0 || a.ram == 0 {
            return Err(bad("cpu and ram must both be positive".into()));
        }
        if a.operators.is_empty() {
            return Err(bad("empty operator set".into()));
        }
        if a.operators.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("operators must be listed once each in ascending order".into()));
        }
        if let Some(&missing) = a.operators.iter().find(|&&o| o as usize >= pipeline.operators.len()) {
            return Err(bad(format!("pipeline has no operator {missing}")));
        }
        let pool = self
            .pools
            .get_mut(a.pool_id.0 as usize)
            .ok_or_else(|| bad(format!("no pool {}", a.pool_id)))?;
        if !a.grant().fits_in(pool.cpu_available(), pool.ram_available()) {
            return Err(bad(format!(
                "pool {} has {}mc/{}MiB available, requested {}mc/{}MiB",
                a.pool_id,
                pool.cpu_available(),
                pool.ram_available(),
                a.cpu,
                a.ram
            )));
        }

        let start_tick = tick.next();
        let mut elapsed = 0u64;
        let mut outcome = None;
        for &op_id in &a.operators {
            let op = &pipeline.operators[op_id as usize];
            if op.ram_mib > a.ram {
                outcome = Some(ContainerOutcome::OutOfMemory {
                    oom_tick: start_tick.offset(elapsed + 1),
                });
                break;
            }
            elapsed += operator_duration(op, a.cpu).expect("cpu checked positive");
        }
        let outcome = outcome.unwrap_or(ContainerOutcome::Completes {
            end_tick: start_tick.offset(elapsed),
        });

        pool.cpu_allocated += a.cpu;
        pool.ram_allocated += a.ram;
        self.version += 1;

        let container_id = ContainerId(self.next_container);
        self.next_container += 1;
        self.due.push(Reverse((outcome.tick(), container_id)));
        let container = Container {
            container_id,
            pool_id: a.pool_id,
            pipeline_id: a.pipeline_id,
            priority: pipeline.priority,
            operators: a.operators.clone(),
            cpu: a.cpu,
            ram: a.ram,
            start_tick,
            outcome,
        };
        Ok(self.live.entry(container_id).or_insert(container))
    }

    /// Retires every container whose precomputed tick is `tick`, crediting its pool.
    pub fn advance(&mut self, tick: Tick) -> Advance {
        let mut out = Advance::default();
        while let Some(&Reverse((due, id))) = self.due.peek() {
            if due > tick {
                break;
            }
            self.due.pop();
            // Suspended containers leave stale heap entries behind.
            let Some(c) = self.live.get(&id) else { continue };
            if c.outcome.tick() != due {
                continue;
            }
            let c = self.remove(id);
            match c.outcome {
                ContainerOutcome::Completes { .. } => out.completed.push(c),
                ContainerOutcome::OutOfMemory { .. } => out.failures.push(Failure {
                    pipeline_id: c.pipeline_id,
                    container_id: c.container_id,
                    pool_id: c.pool_id,
                    operators: c.operators,
                    cpu: c.cpu,
                    ram: c.ram,
                    reason: FailureReason::Oom,
                    failed: true,
                }),
            }
        }
        out
    }

    /// Preempts containers. All ids are checked before anything is removed.
    pub fn apply_suspensions(&mut self, ids: &[ContainerId]) -> Result<Vec<Container>, ExecutorError> {
        for (i, id) in ids.iter().enumerate() {
            if !self.live.contains_key(id) || ids[..i].contains(id) {
                return Err(ExecutorError::UnknownContainer(*id));
            }
        }
        Ok(ids.iter().map(|id| self.remove(*id)).collect())
    }

    fn remove(&mut self, id: ContainerId) -> Container {
        let c = self.live.remove(&id).expect("live container");
        let pool = &mut self.pools[c.pool_id.0 as usize];
        pool.cpu_allocated -= c.cpu;
        pool.ram_allocated -= c.ram;
        self.version += 1;
        c
    }

    pub fn pool_view(&self) -> Vec<PoolView> {
        let mut views: Vec<PoolView> = self
            .pools
            .iter()
            .map(|p| PoolView {
                pool_id: p.pool_id,
                cpu_capacity: p.cpu_capacity,
                ram_capacity: p.ram_capacity,
                cpu_available: p.cpu_available(),
                ram_available: p.ram_available(),
                running: Vec::new(),
            })
            .collect();
        for c in self.live.values() {
            views[c.pool_id.0 as usize].running.push(c.summary());
        }
        views
    }

    /// Checks that every pool's allocation equals the sum of its live grants.
    pub fn check_conservation(&self) -> Result<(), String> {
        let mut sums = vec![Grant::default(); self.pools.len()];
        for c in self.live.values() {
            let s = &mut sums[c.pool_id.0 as usize];
            s.cpu += c.cpu;
            s.ram += c.ram;
        }
        for (p, s) in self.pools.iter().zip(&sums) {
            if p.cpu_allocated != s.cpu || p.ram_allocated != s.ram {
                return Err(format!(
                    "pool {} ledger {}mc/{}MiB but live grants sum to {}mc/{}MiB",
                    p.pool_id, p.cpu_allocated, p.ram_allocated, s.cpu, s.ram
                ));
            }
            if p.cpu_allocated > p.cpu_capacity || p.ram_allocated > p.ram_capacity {
                return Err(format!("pool {} over capacity", p.pool_id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{Operator, ScalingFn};

    fn pipeline(ops: &[(u64, u64)]) -> Pipeline {
        Pipeline {
            id: PipelineId(1),
            arrival_tick: Tick(0),
            priority: Priority::Batch,
            operators: ops
                .iter()
                .enumerate()
                .map(|(i, &(ram, base))| Operator {
                    id: i as OperatorId,
                    parents: if i == 0 { vec![] } else { vec![i as OperatorId - 1] },
                    ram_mib: ram,
                    base_ticks: base,
                    scaling: ScalingFn::Constant,
                })
                .collect(),
        }
    }

    fn assign(p: &Pipeline, cpu: u64, ram: u64) -> Assignment {
        Assignment::whole_pipeline(p, PoolId(0), Grant::new(cpu, ram))
    }

    #[test]
    fn sequential_sum_sets_end_tick() {
        let mut ex = Executor::new(1, 16000, 32768);
        let p = pipeline(&[(1000, 300), (1000, 200)]);
        let c = ex.create_container(&assign(&p, 1600, 4096), &p, Tick(10)).unwrap();
        assert_eq!(c.start_tick, Tick(11));
        assert_eq!(c.outcome, ContainerOutcome::Completes { end_tick: Tick(511) });
    }

    #[test]
    fn oom_one_tick_after_offender_starts() {
        let mut ex = Executor::new(1, 16000, 32768);
        let p = pipeline(&[(1000, 300), (5000, 200)]);
        let c = ex.create_container(&assign(&p, 1600, 4096), &p, Tick(0)).unwrap();
        assert_eq!(c.outcome, ContainerOutcome::OutOfMemory { oom_tick: Tick(1 + 301) });

        let q = pipeline(&[(5000, 300)]);
        let c = ex.create_container(&assign(&q, 1600, 4096), &q, Tick(0)).unwrap();
        assert_eq!(c.outcome, ContainerOutcome::OutOfMemory { oom_tick: Tick(2) });
    }

    #[test]
    fn insufficient_capacity_is_invalid() {
        let mut ex = Executor::new(2, 16000, 32768);
        let p = pipeline(&[(10, 1)]);
        let err = ex.create_container(&assign(&p, 8001, 10), &p, Tick(0)).unwrap_err();
        assert!(matches!(err, ExecutorError::InvalidAssignment { .. }));
        assert_eq!(ex.version(), 0);
    }

    #[test]
    fn advance_retires_and_credits() {
        let mut ex = Executor::new(1, 16000, 32768);
        let p = pipeline(&[(10, 5)]);
        let c = ex.create_container(&assign(&p, 1600, 3276), &p, Tick(0)).unwrap().clone();
        assert_eq!(ex.pools()[0].cpu_available(), 14400);
        for t in 0..6 {
            assert_eq!(ex.advance(Tick(t)), Advance::default());
        }
        let adv = ex.advance(Tick(6));
        assert_eq!(adv.completed, vec![c]);
        assert!(adv.failures.is_empty());
        assert_eq!(ex.pools()[0].cpu_available(), 16000);
        assert_eq!(ex.pools()[0].ram_available(), 32768);
    }

    #[test]
    fn oom_failure_carries_grant() {
        let mut ex = Executor::new(1, 16000, 32768);
        let p = pipeline(&[(5000, 5)]);
        ex.create_container(&assign(&p, 1600, 3276), &p, Tick(0)).unwrap();
        let adv = ex.advance(Tick(2));
        assert!(adv.completed.is_empty());
        assert_eq!(adv.failures.len(), 1);
        assert_eq!(adv.failures[0].grant(), Grant::new(1600, 3276));
        assert!(adv.failures[0].failed);
    }

    #[test]
    fn suspension_frees_same_tick_and_rejects_unknown() {
        let mut ex = Executor::new(1, 1000, 1000);
        let p = pipeline(&[(10, 50)]);
        let id = ex.create_container(&assign(&p, 1000, 1000), &p, Tick(0)).unwrap().container_id;
        assert!(ex.apply_suspensions(&[]).unwrap().is_empty());
        assert_eq!(ex.apply_suspensions(&[id]).unwrap().len(), 1);
        ex.create_container(&assign(&p, 1000, 1000), &p, Tick(0)).unwrap();
        assert_eq!(ex.apply_suspensions(&[id]), Err(ExecutorError::UnknownContainer(id)));
        // The stale heap entry for the suspended container is skipped.
        let adv = ex.advance(Tick(51));
        assert_eq!(adv.completed.len(), 1);
        assert_ne!(adv.completed[0].container_id, id);
    }

    #[test]
    fn completed_container_cannot_be_suspended() {
        let mut ex = Executor::new(1, 1000, 1000);
        let p = pipeline(&[(10, 1)]);
        let id = ex.create_container(&assign(&p, 10, 10), &p, Tick(0)).unwrap().container_id;
        ex.advance(Tick(2));
        assert_eq!(ex.apply_suspensions(&[id]), Err(ExecutorError::UnknownContainer(id)));
    }

    #[test]
    fn even_split_and_view() {
        let mut ex = Executor::new(2, 16000, 32768);
        let view = ex.pool_view();
        assert_eq!(view.len(), 2);
        for v in &view {
            assert_eq!((v.cpu_available, v.ram_available), (8000, 16384));
        }
        let p = pipeline(&[(10, 3)]);
        ex.create_container(&assign(&p, 1600, 3276), &p, Tick(0)).unwrap();
        let view = ex.pool_view();
        assert_eq!((view[0].cpu_available, view[0].ram_available), (6400, 13108));
        assert_eq!(view[0].running.len(), 1);
        ex.advance(Tick(4));
        let view = ex.pool_view();
        assert_eq!((view[0].cpu_available, view[0].ram_available), (8000, 16384));
        ex.check_conservation().unwrap();
    }

    #[test]
    fn uneven_totals_keep_sum() {
        let ex = Executor::new(3, 16000, 32768);
        let cpu: u64 = ex.pools().iter().map(|p| p.cpu_capacity).sum();
        let ram: u64 = ex.pools().iter().map(|p| p.ram_capacity).sum();
        assert_eq!((cpu, ram), (16000, 32768));
    }
}
