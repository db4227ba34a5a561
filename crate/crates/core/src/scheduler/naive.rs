//! One pool, one container at a time, strict arrival order.

use super::{SchedulerError, SchedulerState, StepOutput};
use crate::executor::{Assignment, Failure, Grant};
use crate::workload::{Pipeline, Priority};

pub fn naive_init(state: &mut SchedulerState) -> Result<(), SchedulerError> {
    if state.num_pools() != 1 {
        return Err(SchedulerError::Config(format!(
            "naive scheduler needs exactly one pool (num_pools = {})",
            state.num_pools()
        )));
    }
    state.use_single_queue();
    Ok(())
}

/// Hands the whole pool to the head of the queue whenever the pool is idle.
/// An OOM at full allocation cannot be retried with more, so it is terminal.
pub fn naive_step(
    state: &mut SchedulerState,
    failures: Vec<Failure>,
    arrivals: Vec<Pipeline>,
) -> Result<StepOutput, SchedulerError> {
    for f in &failures {
        state.fail_terminal(f.pipeline_id, Some(f.grant()))?;
    }
    for p in arrivals {
        state.admit(p);
    }

    let mut out = StepOutput::default();
    let pool = &state.pools()[0];
    if !pool.running.is_empty() {
        return Ok(out);
    }
    let (pool_id, grant) = (pool.pool_id, Grant::new(pool.cpu_available, pool.ram_available));
    // Single-queue mode: every priority maps to the same FIFO.
    let Some(id) = state.waiting_mut(Priority::Batch).pop_front() else {
        return Ok(out);
    };
    let entry = state
        .pipeline(id)
        .ok_or_else(|| SchedulerError::Policy(format!("queued pipeline {id} is unknown")))?;
    out.assignments
        .push(Assignment::whole_pipeline(&entry.pipeline, pool_id, grant));
    state.mark_running(id)?;
    Ok(out)
}
