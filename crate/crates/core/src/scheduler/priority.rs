//! Priority-ordered scheduling with OOM doubling and preemption, on one
//! pool (`priority`) or several (`priority-pool`).

use super::policy::{choose_pool, next_request, select_victim, PoolAvailability, Request};
use super::{SchedulerError, SchedulerState, StepOutput};
use crate::executor::{Assignment, ContainerSummary, Failure};
use crate::workload::{Pipeline, Priority};

pub fn priority_init(state: &mut SchedulerState) -> Result<(), SchedulerError> {
    if state.num_pools() != 1 {
        return Err(SchedulerError::Config(format!(
            "priority scheduler needs exactly one pool (num_pools = {}); use priority-pool",
            state.num_pools()
        )));
    }
    Ok(())
}

pub fn priority_pool_init(_state: &mut SchedulerState) -> Result<(), SchedulerError> {
    Ok(())
}

pub fn priority_step(
    state: &mut SchedulerState,
    failures: Vec<Failure>,
    arrivals: Vec<Pipeline>,
) -> Result<StepOutput, SchedulerError> {
    allocate(state, failures, arrivals)
}

/// Same policy as [`priority_step`]; placement picks the pool with the most
/// available RAM that fits, and victims may come from any pool.
pub fn priority_pool_step(
    state: &mut SchedulerState,
    failures: Vec<Failure>,
    arrivals: Vec<Pipeline>,
) -> Result<StepOutput, SchedulerError> {
    allocate(state, failures, arrivals)
}

fn allocate(
    state: &mut SchedulerState,
    failures: Vec<Failure>,
    arrivals: Vec<Pipeline>,
) -> Result<StepOutput, SchedulerError> {
    let released = state.release_suspended();
    for f in &failures {
        state.requeue_failed(f)?;
    }
    let had_input = released > 0 || !failures.is_empty() || !arrivals.is_empty();
    for p in arrivals {
        state.admit(p);
    }

    let mut out = StepOutput::default();
    // Queues and capacity are unchanged since the last step: nothing new can fit.
    if !had_input && !state.view_changed() {
        return Ok(out);
    }

    let now = state.now();
    let totals = state.totals();
    let mut avail: Vec<PoolAvailability> = state.pools().iter().map(PoolAvailability::from).collect();
    let mut running: Vec<ContainerSummary> = state.running().copied().collect();

    'levels: for priority in Priority::ALL.into_iter().rev() {
        while let Some(&id) = state.waiting(priority).front() {
            let entry = state
                .pipeline(id)
                .ok_or_else(|| SchedulerError::Policy(format!("queued pipeline {id} is unknown")))?;
            let grant = match next_request(entry.history.as_ref(), totals) {
                Request::TerminalFailure => {
                    let last = entry.history.map(|h| h.last_grant);
                    state.waiting_mut(priority).pop_front();
                    state.fail_terminal(id, last)?;
                    continue;
                }
                Request::Grant(g) => g,
            };

            let fitting: Vec<PoolAvailability> = avail.iter().copied().filter(|p| p.fits(grant)).collect();
            let pool_id = if let Some(pool_id) = choose_pool(&fitting) {
                pool_id
            } else if entry.pipeline.arrival_tick == now {
                // Same-tick arrival with no room: try to evict one lower-priority
                // container whose release makes the request fit on its pool.
                let candidates: Vec<ContainerSummary> = running
                    .iter()
                    .copied()
                    .filter(|c| {
                        let p = &avail[c.pool_id.0 as usize];
                        grant.fits_in(p.cpu_available + c.cpu, p.ram_available + c.ram)
                    })
                    .collect();
                let Some(victim_id) = select_victim(&candidates, priority) else {
                    break 'levels;
                };
                let pos = running
                    .iter()
                    .position(|c| c.container_id == victim_id)
                    .expect("victim drawn from running");
                let victim = running.remove(pos);
                let pool = &mut avail[victim.pool_id.0 as usize];
                pool.cpu_available += victim.cpu;
                pool.ram_available += victim.ram;
                out.suspensions.push(victim_id);
                state.suspend(victim.pipeline_id, victim.grant())?;
                log::debug!(
                    "tick {now}: preempting container {victim_id} (pipeline {}) for pipeline {id}",
                    victim.pipeline_id
                );
                victim.pool_id
            } else {
                break 'levels;
            };

            let pool = &mut avail[pool_id.0 as usize];
            pool.cpu_available -= grant.cpu;
            pool.ram_available -= grant.ram;
            let entry = state.pipeline(id).expect("checked above");
            out.assignments
                .push(Assignment::whole_pipeline(&entry.pipeline, pool_id, grant));
            state.waiting_mut(priority).pop_front();
            state.mark_running(id)?;
        }
    }
    Ok(out)
}
