mod common;

use common::{chain, config, single};
use eudoxia::metrics::EventKind;
use eudoxia::{
    Assignment, Grant, Pipeline, PipelineId, PoolId, Priority, ScalingFn, SchedulerRegistry, SchedulerState,
    SimConfig, SimError, Simulation, StepOutput, Tick,
};

fn run(cfg: SimConfig, pipelines: Vec<Pipeline>) -> eudoxia::SimulationReport {
    let mut sim = Simulation::with_pipelines(cfg, &SchedulerRegistry::with_builtins(), pipelines).unwrap();
    sim.set_audit(true);
    sim.run().unwrap()
}

fn created_ticks(report: &eudoxia::SimulationReport, id: u64) -> Vec<u64> {
    report
        .events
        .iter()
        .filter(|e| e.pipeline_id == PipelineId(id) && e.kind == EventKind::ContainerCreated)
        .map(|e| e.tick.0)
        .collect()
}

#[test]
fn empty_workload_runs_to_the_end_with_no_events() {
    let report = run(config("priority", 0.1), vec![]);
    assert!(report.events.is_empty());
    assert_eq!(report.final_tick(), Tick(10_000));
    assert_eq!(report.summary.arrived, 0);
    assert_eq!(report.samples.len(), 100);
    assert!(report.samples.iter().all(|s| s.cpu_allocated == 0 && s.ram_allocated == 0));
}

#[test]
fn single_pipeline_makespan_matches_hand_computed_durations() {
    // At the initial 1600 mc grant: linear 1000 -> 625, amdahl(0.5) 800 -> 650,
    // constant 300 -> 300.
    let p = chain(
        0,
        0,
        Priority::Batch,
        &[
            (256, 1000, ScalingFn::Linear),
            (256, 800, ScalingFn::Amdahl(0.5)),
            (256, 300, ScalingFn::Constant),
        ],
    );
    let report = run(config("priority", 0.1), vec![p]);
    let r = &report.pipelines[&PipelineId(0)];
    assert_eq!(r.first_start_tick, Some(Tick(1)));
    assert_eq!(r.runtime_ticks(), Some(1575));
    assert_eq!(r.completion_tick, Some(Tick(1576)));
    assert_eq!(r.latency(), Some(1576));
}

#[test]
fn freed_capacity_is_reused_on_the_same_tick() {
    // Ten 1600 mc grants fill the 16000 mc pool; the eleventh waits.
    let pipelines = (0..11)
        .map(|i| single(i, 0, Priority::Batch, 64, 100, ScalingFn::Constant))
        .collect();
    let report = run(config("priority", 0.01), pipelines);
    let first_done = report.pipelines[&PipelineId(0)].completion_tick.unwrap();
    assert_eq!(first_done, Tick(101));
    assert_eq!(created_ticks(&report, 10), vec![101]);
}

#[test]
fn naive_runs_one_pipeline_at_a_time() {
    let pipelines = (0..4)
        .map(|i| single(i, 0, Priority::Interactive, 64, 500, ScalingFn::Linear))
        .collect();
    let report = run(config("naive", 0.05), pipelines);
    let mut live = 0i32;
    for e in &report.events {
        match e.kind {
            EventKind::ContainerCreated => {
                live += 1;
                assert!(live <= 1, "two containers live at tick {}", e.tick);
                assert_eq!(e.grant, Some(Grant::new(16_000, 32_768)));
            }
            EventKind::Completed | EventKind::Oom => live -= 1,
            _ => {}
        }
    }
    assert_eq!(report.summary.completed, 4);
}

#[test]
fn naive_returns_oom_to_the_user() {
    let p = single(0, 3, Priority::Batch, 40_000, 10, ScalingFn::Constant);
    let report = run(config("naive", 0.01), vec![p]);
    let kinds: Vec<_> = report.events.iter().map(|e| (e.tick.0, e.kind)).collect();
    assert_eq!(
        kinds,
        vec![
            (3, EventKind::Arrived),
            (3, EventKind::ContainerCreated),
            (5, EventKind::Oom),
            (5, EventKind::TerminalFailure)
        ]
    );
    assert_eq!(report.summary.terminal_failures, 1);
}

#[test]
fn priority_serves_higher_levels_first() {
    // The pool holds ten initial grants; twelve arrive together.
    let mut pipelines: Vec<Pipeline> = (0..10)
        .map(|i| single(i, 0, Priority::Batch, 64, 100, ScalingFn::Constant))
        .collect();
    pipelines.push(single(10, 0, Priority::Interactive, 64, 100, ScalingFn::Constant));
    pipelines.push(single(11, 0, Priority::Iterative, 64, 100, ScalingFn::Constant));
    let report = run(config("priority", 0.01), pipelines);
    assert_eq!(created_ticks(&report, 10), vec![0]);
    assert_eq!(created_ticks(&report, 11), vec![0]);
    // Batch FIFO: the last two batch arrivals wait for the first wave.
    assert_eq!(created_ticks(&report, 8), vec![101]);
    assert_eq!(created_ticks(&report, 9), vec![101]);
    assert_eq!(report.summary.preemptions, 0);
}

#[test]
fn arrival_into_a_full_pool_preempts_on_its_arrival_tick() {
    let mut pipelines: Vec<Pipeline> = (0..10)
        .map(|i| single(i, 0, Priority::Batch, 64, 200, ScalingFn::Constant))
        .collect();
    pipelines.push(single(10, 20, Priority::Interactive, 64, 10, ScalingFn::Constant));
    let report = run(config("priority", 0.01), pipelines);
    assert_eq!(created_ticks(&report, 10), vec![20]);
    assert_eq!(report.summary.preemptions, 1);
}

#[test]
fn requeued_failure_does_not_preempt() {
    // Nine batch grants plus the interactive one fill the pool. The
    // interactive pipeline OOMs, and its doubled request waits for capacity
    // instead of evicting batch work.
    let mut pipelines: Vec<Pipeline> = (0..9)
        .map(|i| single(i, 0, Priority::Batch, 64, 200, ScalingFn::Constant))
        .collect();
    pipelines.push(single(9, 0, Priority::Interactive, 5000, 10, ScalingFn::Constant));
    let report = run(config("priority", 0.01), pipelines);
    assert_eq!(created_ticks(&report, 9), vec![0, 201]);
    assert_eq!(report.summary.preemptions, 0);
    assert_eq!(report.pipelines[&PipelineId(9)].retries, 1);
}

#[test]
fn audit_reports_nothing_for_a_busy_multi_pool_run() {
    let cfg = SimConfig {
        num_pools: 3,
        scheduling_algo: "priority-pool".into(),
        waiting_ticks_mean: 500,
        duration: 2.0,
        seed: 11,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(cfg, &SchedulerRegistry::with_builtins()).unwrap();
    sim.set_audit(true);
    let report = sim.run().unwrap();
    let s = &report.summary;
    assert!(s.arrived > 100);
    assert_eq!(s.arrived, s.completed + s.terminal_failures + s.unfinished_running + s.unfinished_queued);
}

fn scheduler_registry_with(key: &str, step: fn(&mut SchedulerState, Vec<Pipeline>) -> StepOutput) -> SchedulerRegistry {
    let mut r = SchedulerRegistry::with_builtins();
    r.register(key, |_s: &mut SchedulerState| Ok(()), move |s: &mut SchedulerState, _f, a| Ok(step(s, a)))
        .unwrap();
    r
}

#[test]
fn assignment_breaking_operator_order_is_a_fault() {
    let registry = scheduler_registry_with("child-first", |_s, arrivals| StepOutput {
        suspensions: vec![],
        assignments: arrivals
            .iter()
            .map(|p| Assignment {
                pipeline_id: p.id,
                operators: vec![1],
                pool_id: PoolId(0),
                cpu: 1000,
                ram: 1000,
            })
            .collect(),
    });
    let p = chain(0, 0, Priority::Batch, &[(64, 10, ScalingFn::Constant), (64, 10, ScalingFn::Constant)]);
    let err = Simulation::with_pipelines(config("child-first", 0.01), &registry, vec![p]).unwrap().run().unwrap_err();
    assert!(err.is_fault(), "{err:?}");
    assert!(err.to_string().contains("parent"), "{err}");
}

#[test]
fn over_capacity_assignment_is_a_fault() {
    let registry = scheduler_registry_with("greedy", |_s, arrivals| StepOutput {
        suspensions: vec![],
        assignments: arrivals
            .iter()
            .map(|p| Assignment::whole_pipeline(p, PoolId(0), Grant::new(16_001, 10)))
            .collect(),
    });
    let p = single(0, 0, Priority::Batch, 1, 10, ScalingFn::Constant);
    let err = Simulation::with_pipelines(config("greedy", 0.01), &registry, vec![p])
        .unwrap()
        .run()
        .unwrap_err();
    assert!(matches!(err, SimError::Executor(_)), "{err:?}");
    assert!(err.is_fault());
}

#[test]
fn scheduler_init_rejects_multiple_pools_for_single_pool_policies() {
    for algo in ["naive", "priority"] {
        let cfg = SimConfig {
            num_pools: 2,
            scheduling_algo: algo.into(),
            ..SimConfig::default()
        };
        let err = Simulation::new(cfg, &SchedulerRegistry::with_builtins()).err().unwrap();
        assert!(!err.is_fault(), "{algo}: {err:?}");
    }
}
