//! The per-tick main loop wiring workload, scheduler, executor, and metrics.

use crate::clock::Tick;
use crate::config::{ConfigError, SimConfig};
use crate::executor::{Assignment, ExecutorError, Executor, Grant};
use crate::metrics::{Event, MetricsError, MetricsRecorder, SimulationReport};
use crate::rng::{stream, Stream};
use crate::scheduler::{
    global_registry, PipelineStatus, RegistryError, SchedulerError, SchedulerRegistry, SchedulerState, StepFn,
    StepOutput,
};
use crate::workload::{load_trace, GeneratorParams, Pipeline, PipelineId, TraceError, TraceRecord, Workload, WorkloadGenerator};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Executor(#[from] ExecutorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("duplicate pipeline id {0} in workload")]
    DuplicatePipeline(PipelineId),
    #[error("invariant audit failed at tick {tick}: {reason}")]
    Audit { tick: Tick, reason: String },
    #[error("replay of trace line {line} did not complete: {reason}")]
    Replay { line: usize, reason: String },
}

impl SimError {
    /// Faults raised while the simulation was running, as opposed to bad input.
    pub fn is_fault(&self) -> bool {
        matches!(
            self,
            SimError::Scheduler(SchedulerError::Policy(_))
                | SimError::Executor(_)
                | SimError::Metrics(_)
                | SimError::Audit { .. }
        )
    }
}

#[derive(Debug)]
struct Progress {
    pipeline: Pipeline,
    completed_ops: Vec<bool>,
    running_ops: Vec<bool>,
    live: u32,
    done: bool,
    failed: bool,
}

impl Progress {
    fn new(pipeline: Pipeline) -> Self {
        let n = pipeline.operators.len();
        Self {
            pipeline,
            completed_ops: vec![false; n],
            running_ops: vec![false; n],
            live: 0,
            done: false,
            failed: false,
        }
    }

    fn stop_running(&mut self, ops: &[u32]) {
        for &o in ops {
            self.running_ops[o as usize] = false;
        }
        self.live -= 1;
    }

    // Operators must be pending, and every parent finished or earlier in the same set.
    fn check_assignment(&self, a: &Assignment) -> Result<(), String> {
        if self.done {
            return Err("pipeline already completed".into());
        }
        if self.failed {
            return Err("pipeline already failed terminally".into());
        }
        for (k, &op_id) in a.operators.iter().enumerate() {
            let Some(op) = self.pipeline.operators.get(op_id as usize) else {
                return Err(format!("pipeline has no operator {op_id}"));
            };
            if self.completed_ops[op_id as usize] {
                return Err(format!("operator {op_id} already completed"));
            }
            if self.running_ops[op_id as usize] {
                return Err(format!("operator {op_id} is already running"));
            }
            for &parent in &op.parents {
                if !self.completed_ops[parent as usize] && !a.operators[..k].contains(&parent) {
                    return Err(format!("operator {op_id} scheduled before its parent {parent}"));
                }
            }
        }
        Ok(())
    }
}

/// One self-contained simulation instance. Instances share nothing and can
/// be moved to other threads for parallel sweeps.
pub struct Simulation {
    config: SimConfig,
    total_ticks: u64,
    now: Tick,
    workload: Workload,
    executor: Executor,
    scheduler: SchedulerState,
    step_fn: StepFn,
    metrics: MetricsRecorder,
    progress: BTreeMap<PipelineId, Progress>,
    seen_version: Option<u64>,
    audit: bool,
    last_output: StepOutput,
}

impl Simulation {
    /// Builds an instance from config: a trace if `trace_path` is set,
    /// synthetic generation otherwise.
    pub fn new(config: SimConfig, registry: &SchedulerRegistry) -> Result<Self, SimError> {
        let workload = match &config.trace_path {
            Some(path) => Workload::from_trace(load_trace(path)?),
            None => Workload::Synthetic(Box::new(WorkloadGenerator::new(
                GeneratorParams::from(&config),
                stream(config.seed, Stream::Workload),
            ))),
        };
        Self::with_workload(config, registry, workload)
    }

    /// Builds an instance that replays `pipelines` instead of generating any.
    pub fn with_pipelines(
        config: SimConfig,
        registry: &SchedulerRegistry,
        pipelines: Vec<Pipeline>,
    ) -> Result<Self, SimError> {
        for p in &pipelines {
            p.validate().map_err(|message| TraceError::InvariantViolation { line: 0, message })?;
        }
        Self::with_workload(config, registry, Workload::from_trace(pipelines))
    }

    fn with_workload(config: SimConfig, registry: &SchedulerRegistry, workload: Workload) -> Result<Self, SimError> {
        config.validate()?;
        let entry = registry.lookup(&config.scheduling_algo)?;
        let total_ticks = config.total_ticks()?;
        let executor = Executor::new(config.num_pools, config.total_cpu_millicores, config.total_ram_mib);
        let mut scheduler = SchedulerState::new(
            Grant::new(config.total_cpu_millicores, config.total_ram_mib),
            executor.pool_view(),
            stream(config.seed, Stream::Scheduler),
        );
        (entry.init)(&mut scheduler)?;
        log::info!(
            "starting `{}`: {} ticks, {} pool(s), seed {}",
            config.scheduling_algo,
            total_ticks,
            config.num_pools,
            config.seed
        );
        Ok(Self {
            config,
            total_ticks,
            now: Tick::ZERO,
            workload,
            executor,
            scheduler,
            step_fn: entry.step,
            metrics: MetricsRecorder::new(),
            progress: BTreeMap::new(),
            seen_version: None,
            audit: false,
            last_output: StepOutput::default(),
        })
    }

    /// Check scheduler and executor invariants after every tick.
    pub fn set_audit(&mut self, on: bool) {
        self.audit = on;
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Next tick to execute; equals the number of ticks executed so far.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_ticks
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    pub fn scheduler_state(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn metrics(&self) -> &MetricsRecorder {
        &self.metrics
    }

    /// What the scheduler returned on the most recent tick.
    pub fn last_output(&self) -> &StepOutput {
        &self.last_output
    }

    /// Runs one tick. Returns `false` once the tick budget is spent.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.now.0 >= self.total_ticks {
            return Ok(false);
        }
        let t = self.now;

        // 1. arrivals
        let arrivals = self.workload.poll(t);
        for p in &arrivals {
            if self.progress.contains_key(&p.id) {
                return Err(SimError::DuplicatePipeline(p.id));
            }
            log::debug!("tick {t}: workload emits pipeline {} ({})", p.id, p.priority);
            self.metrics.record_event(Event::arrived(t, p.id, p.priority))?;
            self.progress.insert(p.id, Progress::new(p.clone()));
        }

        // 2. executor retires due containers
        let advance = self.executor.advance(t);
        let mut finished = Vec::with_capacity(advance.completed.len());
        for c in &advance.completed {
            let prog = self.progress.get_mut(&c.pipeline_id).expect("container of a known pipeline");
            prog.stop_running(&c.operators);
            for &o in &c.operators {
                prog.completed_ops[o as usize] = true;
            }
            finished.push((c.container_id, c.pipeline_id));
            if prog.completed_ops.iter().all(|d| *d) {
                prog.done = true;
                log::debug!("tick {t}: executor completes pipeline {} (container {})", c.pipeline_id, c.container_id);
                self.metrics.record_event(Event::completed(t, c))?;
                self.scheduler.mark_completed(c.pipeline_id);
            } else {
                self.metrics.record_event(Event::container_completed(t, c))?;
            }
        }
        for f in &advance.failures {
            let prog = self.progress.get_mut(&f.pipeline_id).expect("container of a known pipeline");
            prog.stop_running(&f.operators);
            log::debug!(
                "tick {t}: executor reports OOM for pipeline {} at {}mc/{}MiB",
                f.pipeline_id,
                f.cpu,
                f.ram
            );
            self.metrics.record_event(Event::oom(t, f))?;
        }

        // 3. scheduler step
        let version = self.executor.version();
        let view = (self.seen_version != Some(version)).then(|| self.executor.pool_view());
        self.seen_version = Some(version);
        self.scheduler.begin_tick(t, view, finished);
        let out = (self.step_fn)(&mut self.scheduler, advance.failures, arrivals)?;
        for tf in self.scheduler.drain_terminal() {
            if let Some(prog) = self.progress.get_mut(&tf.pipeline_id) {
                prog.failed = true;
            }
            log::debug!("tick {t}: scheduler returns pipeline {} as failed", tf.pipeline_id);
            self.metrics
                .record_event(Event::terminal_failure(t, tf.pipeline_id, tf.grant))?;
        }

        // 4. suspensions, then assignments in order
        for c in self.executor.apply_suspensions(&out.suspensions)? {
            let prog = self.progress.get_mut(&c.pipeline_id).expect("container of a known pipeline");
            prog.stop_running(&c.operators);
            log::debug!("tick {t}: preempted container {} (pipeline {})", c.container_id, c.pipeline_id);
            self.metrics.record_event(Event::preempted(t, &c))?;
        }
        for a in &out.assignments {
            let prog = self
                .progress
                .get_mut(&a.pipeline_id)
                .ok_or_else(|| ExecutorError::InvalidAssignment {
                    pipeline: a.pipeline_id,
                    reason: "pipeline never arrived".into(),
                })?;
            prog.check_assignment(a).map_err(|reason| ExecutorError::InvalidAssignment {
                pipeline: a.pipeline_id,
                reason,
            })?;
            let c = self.executor.create_container(a, &prog.pipeline, t)?;
            for &o in &c.operators {
                prog.running_ops[o as usize] = true;
            }
            prog.live += 1;
            log::debug!(
                "tick {t}: container {} for pipeline {} on pool {} with {}mc/{}MiB",
                c.container_id,
                c.pipeline_id,
                c.pool_id,
                c.cpu,
                c.ram
            );
            let event = Event::container_created(t, c);
            self.metrics.record_event(event)?;
        }

        // 5. sampling
        if t.0.is_multiple_of(self.config.sample_interval_ticks) {
            self.metrics.sample_utilization(t, self.executor.pools());
        }
        if self.audit {
            self.check_invariants().map_err(|reason| SimError::Audit { tick: t, reason })?;
        }
        self.last_output = out;
        self.now = t.next();
        Ok(true)
    }

    fn check_invariants(&self) -> Result<(), String> {
        self.executor.check_conservation()?;
        self.scheduler.audit()?;
        for (id, prog) in &self.progress {
            let status = self
                .scheduler
                .status(*id)
                .ok_or_else(|| format!("pipeline {id} was never admitted by the scheduler"))?;
            let consistent = if prog.done {
                status == PipelineStatus::Completed
            } else if prog.failed {
                status == PipelineStatus::Failed
            } else if prog.live > 0 {
                status == PipelineStatus::Running
            } else {
                matches!(status, PipelineStatus::Waiting | PipelineStatus::Suspending)
            };
            if !consistent {
                return Err(format!(
                    "pipeline {id}: scheduler says {status:?}, engine has live={} done={} failed={}",
                    prog.live, prog.done, prog.failed
                ));
            }
        }
        Ok(())
    }

    /// Runs the remaining ticks and finalizes.
    pub fn run(mut self) -> Result<SimulationReport, SimError> {
        while self.step()? {}
        self.finish()
    }

    /// Finalizes at the current tick; anything still queued or running is unfinished.
    pub fn finish(self) -> Result<SimulationReport, SimError> {
        log::info!("finished after {} ticks", self.now);
        Ok(self.metrics.finalize(self.now, self.config)?)
    }
}

/// Runs `config` against the process-wide scheduler registry.
pub fn run_simulation(config: SimConfig) -> Result<SimulationReport, SimError> {
    run_simulation_with(config, &global_registry())
}

pub fn run_simulation_with(config: SimConfig, registry: &SchedulerRegistry) -> Result<SimulationReport, SimError> {
    Simulation::new(config, registry)?.run()
}

/// Replays every trace row alone on fresh pools, arriving at tick 0, and
/// returns each pipeline's simulated runtime (first container start to
/// completion). The config's duration bounds each replay.
pub fn replay_isolated(
    config: &SimConfig,
    registry: &SchedulerRegistry,
    records: &[TraceRecord],
) -> Result<BTreeMap<PipelineId, u64>, SimError> {
    let mut out = BTreeMap::new();
    let mut cfg = config.clone();
    cfg.trace_path = None;
    for rec in records {
        let mut p = rec.pipeline.clone();
        p.arrival_tick = Tick::ZERO;
        let id = p.id;
        let mut sim = Simulation::with_pipelines(cfg.clone(), registry, vec![p])?;
        loop {
            let r = sim.metrics().record(id);
            if r.is_some_and(|r| r.completion_tick.is_some() || r.terminal_tick.is_some()) {
                break;
            }
            if !sim.step()? {
                break;
            }
        }
        let report = sim.finish()?;
        let record = &report.pipelines[&id];
        let runtime = record.runtime_ticks().ok_or_else(|| SimError::Replay {
            line: rec.line,
            reason: if record.terminal_tick.is_some() {
                "scheduler returned a terminal failure".into()
            } else {
                format!("still running after {} ticks (raise `duration`)", report.end_tick)
            },
        })?;
        out.insert(id, runtime);
    }
    Ok(out)
}
