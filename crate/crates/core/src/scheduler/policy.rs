//! Sizing, victim selection, and placement rules shared by the built-in
//! priority schedulers.

use super::AllocationHistory;
use crate::executor::{ContainerId, ContainerSummary, Grant, PoolId, PoolView};
use crate::workload::Priority;
use std::cmp::Ordering;

/// First grant, as a percentage of aggregate capacity.
pub const INITIAL_PERCENT: u64 = 10;
/// Ceiling for OOM retries, as a percentage of aggregate capacity.
pub const CAP_PERCENT: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Grant(Grant),
    /// The pipeline already failed at the cap; hand the failure back to the user.
    TerminalFailure,
}

fn percent_of(total: u64, percent: u64) -> u64 {
    (total as u128 * percent as u128 / 100) as u64
}

pub fn cap_grant(totals: Grant) -> Grant {
    Grant::new(percent_of(totals.cpu, CAP_PERCENT), percent_of(totals.ram, CAP_PERCENT))
}

/// Size of the next container for a pipeline given its allocation history.
///
/// New pipelines get 10% of the aggregate. After an OOM the previous grant
/// is doubled per resource, each capped at 50%; a pipeline that already
/// failed at the cap on either resource is terminal. A preempted pipeline
/// gets its previous grant back unchanged.
pub fn next_request(history: Option<&AllocationHistory>, totals: Grant) -> Request {
    let cap = cap_grant(totals);
    match history {
        None => Request::Grant(Grant::new(
            percent_of(totals.cpu, INITIAL_PERCENT).max(1),
            percent_of(totals.ram, INITIAL_PERCENT).max(1),
        )),
        Some(h) if h.failed => {
            let prev = h.last_grant;
            if prev.cpu >= cap.cpu || prev.ram >= cap.ram {
                Request::TerminalFailure
            } else {
                Request::Grant(Grant::new(
                    prev.cpu.saturating_mul(2).min(cap.cpu),
                    prev.ram.saturating_mul(2).min(cap.ram),
                ))
            }
        }
        Some(h) => Request::Grant(h.last_grant),
    }
}

/// Picks a running container to preempt for an `incoming` pipeline.
///
/// Only containers of strictly lower priority qualify. Among them: lowest
/// priority first, then most recent start, then highest container id.
pub fn select_victim(running: &[ContainerSummary], incoming: Priority) -> Option<ContainerId> {
    running
        .iter()
        .filter(|c| c.priority < incoming)
        .min_by(|a, b| {
            a.priority
                .cmp(&b.priority)
                .then(b.start_tick.cmp(&a.start_tick))
                .then(b.container_id.cmp(&a.container_id))
        })
        .map(|c| c.container_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolAvailability {
    pub pool_id: PoolId,
    pub cpu_available: u64,
    pub cpu_capacity: u64,
    pub ram_available: u64,
    pub ram_capacity: u64,
}

impl PoolAvailability {
    pub fn fits(&self, g: Grant) -> bool {
        g.fits_in(self.cpu_available, self.ram_available)
    }
}

impl From<&PoolView> for PoolAvailability {
    fn from(v: &PoolView) -> Self {
        Self {
            pool_id: v.pool_id,
            cpu_available: v.cpu_available,
            cpu_capacity: v.cpu_capacity,
            ram_available: v.ram_available,
            ram_capacity: v.ram_capacity,
        }
    }
}

// a/b against c/d without floating point.
fn cmp_fraction(a: u64, b: u64, c: u64, d: u64) -> Ordering {
    (a as u128 * d as u128).cmp(&(c as u128 * b as u128))
}

/// Pool with the largest available RAM fraction; ties go to the larger
/// available CPU fraction, then to the lowest pool id.
pub fn choose_pool(view: &[PoolAvailability]) -> Option<PoolId> {
    view.iter()
        .max_by(|x, y| {
            cmp_fraction(x.ram_available, x.ram_capacity, y.ram_available, y.ram_capacity)
                .then(cmp_fraction(x.cpu_available, x.cpu_capacity, y.cpu_available, y.cpu_capacity))
                .then(y.pool_id.cmp(&x.pool_id))
        })
        .map(|p| p.pool_id)
}
