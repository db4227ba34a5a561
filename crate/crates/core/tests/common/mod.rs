#![allow(dead_code)]

use eudoxia::{Operator, Pipeline, PipelineId, Priority, ScalingFn, SimConfig, Tick};

pub fn op(id: u32, parents: &[u32], ram_mib: u64, base_ticks: u64, scaling: ScalingFn) -> Operator {
    Operator {
        id,
        parents: parents.to_vec(),
        ram_mib,
        base_ticks,
        scaling,
    }
}

/// A chain of operators, each depending on the previous one.
pub fn chain(id: u64, arrival: u64, priority: Priority, ops: &[(u64, u64, ScalingFn)]) -> Pipeline {
    let operators = ops
        .iter()
        .enumerate()
        .map(|(i, &(ram, base, scaling))| {
            let parents: Vec<u32> = if i == 0 { vec![] } else { vec![i as u32 - 1] };
            op(i as u32, &parents, ram, base, scaling)
        })
        .collect();
    Pipeline {
        id: PipelineId(id),
        arrival_tick: Tick(arrival),
        priority,
        operators,
    }
}

pub fn single(id: u64, arrival: u64, priority: Priority, ram: u64, base: u64, scaling: ScalingFn) -> Pipeline {
    chain(id, arrival, priority, &[(ram, base, scaling)])
}

pub fn config(algo: &str, duration: f64) -> SimConfig {
    SimConfig {
        scheduling_algo: algo.to_string(),
        duration,
        ..SimConfig::default()
    }
}

/// Closed-form operator duration, written independently of the library:
/// integer ceil for linear, rational evaluation for amdahl.
pub fn oracle_duration(base: u64, scaling: ScalingFn, cpu: u64) -> u64 {
    let d = match scaling {
        ScalingFn::Constant => base,
        ScalingFn::Linear => (base * 1000).div_ceil(cpu),
        ScalingFn::Amdahl(f) => {
            // f is a float; scale to a rational with 1e9 denominator so the
            // ceil is not thrown off by representation noise.
            let num = (f * 1e9).round() as u128;
            let den = 1_000_000_000u128;
            // base * (f + (1 - f) * 1000 / cpu) = base * (num * cpu + (den - num) * 1000) / (den * cpu)
            let top = base as u128 * (num * cpu as u128 + (den - num) * 1000);
            let bottom = den * cpu as u128;
            top.div_ceil(bottom) as u64
        }
    };
    d.max(1)
}

pub fn oracle_pipeline_runtime(p: &Pipeline, cpu: u64) -> u64 {
    p.operators
        .iter()
        .map(|o| oracle_duration(o.base_ticks, o.scaling, cpu))
        .sum()
}
