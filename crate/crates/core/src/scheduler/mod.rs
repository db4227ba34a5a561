//! The scheduler contract, shared scheduler state, the key registry, and the
//! built-in policies.
//!
//! A scheduler is a pair of procedures registered under a string key: an
//! init procedure that prepares [`SchedulerState`], and a step procedure
//! called once per tick with the containers that failed this tick and the
//! pipelines that arrived this tick. The step returns containers to
//! preempt and containers to create ([`StepOutput`]).
//!
//! Per-tick order, which every scheduler can rely on:
//!
//! 1. the workload emits arrivals for tick `t`;
//! 2. the executor retires containers due at `t` (completions and OOM
//!    failures) and frees their resources;
//! 3. the step runs with this tick's failures and arrivals, seeing the
//!    freed capacity;
//! 4. suspensions are applied (freeing resources at once), then
//!    assignments in list order. An infeasible assignment aborts the run;
//! 5. utilization is sampled.

mod naive;
pub mod policy;
mod priority;

pub use naive::{naive_init, naive_step};
pub use policy::{choose_pool, next_request, select_victim, PoolAvailability, Request};
pub use priority::{priority_init, priority_pool_init, priority_pool_step, priority_step};

use crate::clock::Tick;
use crate::executor::{Assignment, ContainerId, ContainerSummary, Failure, Grant, PoolView};
use crate::rng::SimRng;
use crate::workload::{Pipeline, PipelineId, Priority};
use std::any::Any;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedulerError {
    #[error("scheduler configuration error: {0}")]
    Config(String),
    #[error("scheduler fault: {0}")]
    Policy(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("scheduler key `{0}` is already registered")]
    DuplicateKey(String),
    #[error("scheduler key must be non-empty")]
    EmptyKey,
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
}

/// Preemptions and new containers requested by one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub suspensions: Vec<ContainerId>,
    pub assignments: Vec<Assignment>,
}

impl StepOutput {
    pub fn is_empty(&self) -> bool {
        self.suspensions.is_empty() && self.assignments.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStatus {
    Waiting,
    Suspending,
    Running,
    Completed,
    Failed,
}

impl PipelineStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, PipelineStatus::Completed | PipelineStatus::Failed)
    }
}

/// Last grant a pipeline held and whether it ended in a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationHistory {
    pub last_grant: Grant,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineEntry {
    pub pipeline: Pipeline,
    pub status: PipelineStatus,
    pub history: Option<AllocationHistory>,
}

/// A pipeline the scheduler gave up on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerminalFailure {
    pub pipeline_id: PipelineId,
    pub grant: Option<Grant>,
}

pub struct SchedulerState {
    now: Tick,
    totals: Grant,
    num_pools: u32,
    pools: Vec<PoolView>,
    view_changed: bool,
    completed_containers: Vec<(ContainerId, PipelineId)>,
    single_queue: bool,
    waiting: [VecDeque<PipelineId>; 3],
    suspending: Vec<(PipelineId, Tick)>,
    pipelines: BTreeMap<PipelineId, PipelineEntry>,
    terminal: Vec<TerminalFailure>,
    /// Scheduler-side randomness, independent of the workload stream.
    pub rng: SimRng,
    custom: Option<Box<dyn Any + Send>>,
}

impl fmt::Debug for SchedulerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchedulerState")
            .field("now", &self.now)
            .field("totals", &self.totals)
            .field("waiting", &self.waiting)
            .field("suspending", &self.suspending)
            .field("pipelines", &self.pipelines.len())
            .finish_non_exhaustive()
    }
}

impl SchedulerState {
    pub fn new(totals: Grant, pools: Vec<PoolView>, rng: SimRng) -> Self {
        Self {
            now: Tick::ZERO,
            totals,
            num_pools: pools.len() as u32,
            pools,
            view_changed: true,
            completed_containers: Vec::new(),
            single_queue: false,
            waiting: Default::default(),
            suspending: Vec::new(),
            pipelines: BTreeMap::new(),
            terminal: Vec::new(),
            rng,
            custom: None,
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    /// Aggregate capacity across all pools.
    pub fn totals(&self) -> Grant {
        self.totals
    }

    pub fn num_pools(&self) -> u32 {
        self.num_pools
    }

    pub fn initial_fraction(&self) -> f64 {
        policy::INITIAL_PERCENT as f64 / 100.0
    }

    pub fn cap_fraction(&self) -> f64 {
        policy::CAP_PERCENT as f64 / 100.0
    }

    /// Resource view as of this step (after the executor's advance).
    pub fn pools(&self) -> &[PoolView] {
        &self.pools
    }

    pub fn running(&self) -> impl Iterator<Item = &ContainerSummary> {
        self.pools.iter().flat_map(|p| p.running.iter())
    }

    /// Whether pool allocation changed since the previous step.
    pub fn view_changed(&self) -> bool {
        self.view_changed
    }

    /// Containers that completed this tick.
    pub fn completed_containers(&self) -> &[(ContainerId, PipelineId)] {
        &self.completed_containers
    }

    /// Route every pipeline through one FIFO regardless of priority.
    pub fn use_single_queue(&mut self) {
        self.single_queue = true;
    }

    pub fn waiting(&self, priority: Priority) -> &VecDeque<PipelineId> {
        &self.waiting[self.queue_index(priority)]
    }

    pub fn waiting_mut(&mut self, priority: Priority) -> &mut VecDeque<PipelineId> {
        let i = self.queue_index(priority);
        &mut self.waiting[i]
    }

    pub fn suspending(&self) -> &[(PipelineId, Tick)] {
        &self.suspending
    }

    pub fn pipeline(&self, id: PipelineId) -> Option<&PipelineEntry> {
        self.pipelines.get(&id)
    }

    pub fn pipelines(&self) -> impl Iterator<Item = &PipelineEntry> {
        self.pipelines.values()
    }

    pub fn status(&self, id: PipelineId) -> Option<PipelineStatus> {
        self.pipelines.get(&id).map(|e| e.status)
    }

    pub fn set_custom<T: Any + Send>(&mut self, value: T) {
        self.custom = Some(Box::new(value));
    }

    pub fn custom_mut<T: Any + Send>(&mut self) -> Option<&mut T> {
        self.custom.as_mut().and_then(|b| b.downcast_mut())
    }

    fn queue_index(&self, priority: Priority) -> usize {
        if self.single_queue {
            0
        } else {
            priority.level()
        }
    }

    /// Registers a new arrival and appends it to its waiting queue.
    pub fn admit(&mut self, pipeline: Pipeline) {
        let id = pipeline.id;
        let priority = pipeline.priority;
        self.pipelines.insert(
            id,
            PipelineEntry {
                pipeline,
                status: PipelineStatus::Waiting,
                history: None,
            },
        );
        self.waiting_mut(priority).push_back(id);
    }

    fn entry_mut(&mut self, id: PipelineId) -> Result<&mut PipelineEntry, SchedulerError> {
        self.pipelines
            .get_mut(&id)
            .ok_or_else(|| SchedulerError::Policy(format!("pipeline {id} is unknown to the scheduler")))
    }

    /// Notes an OOM failure and puts the pipeline back in line.
    pub fn requeue_failed(&mut self, failure: &Failure) -> Result<(), SchedulerError> {
        let entry = self.entry_mut(failure.pipeline_id)?;
        entry.history = Some(AllocationHistory {
            last_grant: failure.grant(),
            failed: true,
        });
        entry.status = PipelineStatus::Waiting;
        let priority = entry.pipeline.priority;
        self.waiting_mut(priority).push_back(failure.pipeline_id);
        Ok(())
    }

    pub fn mark_running(&mut self, id: PipelineId) -> Result<(), SchedulerError> {
        self.entry_mut(id)?.status = PipelineStatus::Running;
        Ok(())
    }

    /// Parks a preempted pipeline in the suspending queue for one tick.
    pub fn suspend(&mut self, id: PipelineId, grant: Grant) -> Result<(), SchedulerError> {
        let now = self.now;
        let entry = self.entry_mut(id)?;
        entry.status = PipelineStatus::Suspending;
        entry.history = Some(AllocationHistory {
            last_grant: grant,
            failed: false,
        });
        self.suspending.push((id, now));
        Ok(())
    }

    /// Moves pipelines suspended on an earlier tick back to the tail of their
    /// waiting queues. Returns how many moved.
    pub fn release_suspended(&mut self) -> usize {
        let now = self.now;
        let (ready, keep): (Vec<_>, Vec<_>) = self.suspending.drain(..).partition(|&(_, t)| t < now);
        self.suspending = keep;
        for &(id, _) in &ready {
            let Some(entry) = self.pipelines.get_mut(&id) else { continue };
            entry.status = PipelineStatus::Waiting;
            let priority = entry.pipeline.priority;
            self.waiting_mut(priority).push_back(id);
        }
        ready.len()
    }

    /// Gives up on a pipeline; the engine reports it as a terminal failure.
    pub fn fail_terminal(&mut self, id: PipelineId, grant: Option<Grant>) -> Result<(), SchedulerError> {
        self.entry_mut(id)?.status = PipelineStatus::Failed;
        self.terminal.push(TerminalFailure { pipeline_id: id, grant });
        Ok(())
    }

    pub(crate) fn begin_tick(
        &mut self,
        now: Tick,
        pools: Option<Vec<PoolView>>,
        completed: Vec<(ContainerId, PipelineId)>,
    ) {
        self.now = now;
        self.view_changed = pools.is_some();
        if let Some(p) = pools {
            self.pools = p;
        }
        self.completed_containers = completed;
    }

    pub(crate) fn mark_completed(&mut self, id: PipelineId) {
        if let Some(e) = self.pipelines.get_mut(&id) {
            e.status = PipelineStatus::Completed;
        }
    }

    pub(crate) fn drain_terminal(&mut self) -> Vec<TerminalFailure> {
        std::mem::take(&mut self.terminal)
    }

    /// Every known pipeline is in exactly one of waiting, suspending,
    /// running, or a terminal state, and queues hold only known pipelines.
    pub fn audit(&self) -> Result<(), String> {
        let mut waiting_count: BTreeMap<PipelineId, usize> = BTreeMap::new();
        for q in &self.waiting {
            for id in q {
                *waiting_count.entry(*id).or_default() += 1;
            }
        }
        let mut suspending_count: BTreeMap<PipelineId, usize> = BTreeMap::new();
        for (id, _) in &self.suspending {
            *suspending_count.entry(*id).or_default() += 1;
        }
        for id in waiting_count.keys().chain(suspending_count.keys()) {
            if !self.pipelines.contains_key(id) {
                return Err(format!("queue holds unknown pipeline {id}"));
            }
        }
        for (id, entry) in &self.pipelines {
            let w = waiting_count.get(id).copied().unwrap_or(0);
            let s = suspending_count.get(id).copied().unwrap_or(0);
            let expected = match entry.status {
                PipelineStatus::Waiting => (1, 0),
                PipelineStatus::Suspending => (0, 1),
                _ => (0, 0),
            };
            if (w, s) != expected {
                return Err(format!(
                    "pipeline {id} is {:?} but appears {w} time(s) in waiting and {s} in suspending",
                    entry.status
                ));
            }
        }
        Ok(())
    }
}

pub type InitFn = Arc<dyn Fn(&mut SchedulerState) -> Result<(), SchedulerError> + Send + Sync>;
pub type StepFn =
    Arc<dyn Fn(&mut SchedulerState, Vec<Failure>, Vec<Pipeline>) -> Result<StepOutput, SchedulerError> + Send + Sync>;

#[derive(Clone)]
pub struct SchedulerEntry {
    pub init: InitFn,
    pub step: StepFn,
}

impl fmt::Debug for SchedulerEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SchedulerEntry")
    }
}

/// Maps `scheduling_algo` keys to (init, step) pairs.
#[derive(Clone, Default, Debug)]
pub struct SchedulerRegistry {
    entries: BTreeMap<String, SchedulerEntry>,
}

impl SchedulerRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `naive`, `priority`, and `priority-pool`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("naive", naive_init, naive_step).expect("fresh key");
        r.register("priority", priority_init, priority_step).expect("fresh key");
        r.register("priority-pool", priority_pool_init, priority_pool_step)
            .expect("fresh key");
        r
    }

    pub fn register<I, S>(&mut self, key: &str, init: I, step: S) -> Result<(), RegistryError>
    where
        I: Fn(&mut SchedulerState) -> Result<(), SchedulerError> + Send + Sync + 'static,
        S: Fn(&mut SchedulerState, Vec<Failure>, Vec<Pipeline>) -> Result<StepOutput, SchedulerError>
            + Send
            + Sync
            + 'static,
    {
        if key.is_empty() {
            return Err(RegistryError::EmptyKey);
        }
        if self.entries.contains_key(key) {
            return Err(RegistryError::DuplicateKey(key.to_string()));
        }
        self.entries.insert(
            key.to_string(),
            SchedulerEntry {
                init: Arc::new(init),
                step: Arc::new(step),
            },
        );
        Ok(())
    }

    pub fn lookup(&self, key: &str) -> Result<SchedulerEntry, RegistryError> {
        self.entries
            .get(key)
            .cloned()
            .ok_or_else(|| RegistryError::UnknownScheduler(key.to_string()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn global() -> &'static RwLock<SchedulerRegistry> {
    static GLOBAL: OnceLock<RwLock<SchedulerRegistry>> = OnceLock::new();
    GLOBAL.get_or_init(|| RwLock::new(SchedulerRegistry::with_builtins()))
}

/// Registers a scheduler in the process-wide registry used by
/// [`crate::run_simulation`].
pub fn register_scheduler<I, S>(key: &str, init: I, step: S) -> Result<(), RegistryError>
where
    I: Fn(&mut SchedulerState) -> Result<(), SchedulerError> + Send + Sync + 'static,
    S: Fn(&mut SchedulerState, Vec<Failure>, Vec<Pipeline>) -> Result<StepOutput, SchedulerError>
        + Send
        + Sync
        + 'static,
{
    global()
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .register(key, init, step)
}

/// Snapshot of the process-wide registry.
pub fn global_registry() -> SchedulerRegistry {
    global().read().unwrap_or_else(|e| e.into_inner()).clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn noop_init(_: &mut SchedulerState) -> Result<(), SchedulerError> {
        Ok(())
    }

    fn noop_step(_: &mut SchedulerState, _: Vec<Failure>, _: Vec<Pipeline>) -> Result<StepOutput, SchedulerError> {
        Ok(StepOutput::default())
    }

    #[test]
    fn register_and_lookup() {
        let mut r = SchedulerRegistry::empty();
        r.register("my-scheduler", noop_init, noop_step).unwrap();
        assert!(r.lookup("my-scheduler").is_ok());
        assert_eq!(
            r.lookup("unknown").unwrap_err(),
            RegistryError::UnknownScheduler("unknown".into())
        );
        assert_eq!(r.register("", noop_init, noop_step), Err(RegistryError::EmptyKey));
    }

    #[test]
    fn duplicate_builtin_rejected() {
        let mut r = SchedulerRegistry::with_builtins();
        assert_eq!(
            r.register("naive", noop_init, noop_step),
            Err(RegistryError::DuplicateKey("naive".into()))
        );
        assert_eq!(r.keys().collect::<Vec<_>>(), ["naive", "priority", "priority-pool"]);
    }

    #[test]
    fn global_registry_sees_registrations() {
        register_scheduler("unit-test-global", noop_init, noop_step).unwrap();
        assert!(global_registry().lookup("unit-test-global").is_ok());
        assert!(register_scheduler("unit-test-global", noop_init, noop_step).is_err());
    }

    #[test]
    fn audit_catches_double_queueing() {
        use crate::workload::{Operator, ScalingFn};
        let mut st = SchedulerState::new(Grant::new(10, 10), vec![], stream(0, Stream::Scheduler));
        let p = Pipeline {
            id: PipelineId(3),
            arrival_tick: Tick(0),
            priority: Priority::Batch,
            operators: vec![Operator {
                id: 0,
                parents: vec![],
                ram_mib: 1,
                base_ticks: 1,
                scaling: ScalingFn::Constant,
            }],
        };
        st.admit(p);
        st.audit().unwrap();
        st.waiting_mut(Priority::Interactive).push_back(PipelineId(3));
        assert!(st.audit().is_err());
    }
}
