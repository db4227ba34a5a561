use super::{Event, EventKind, PipelineRecord, UtilizationSample};
use crate::clock::{Tick, TICKS_PER_SECOND};
use crate::config::SimConfig;
use crate::executor::PoolId;
use crate::workload::{PipelineId, Priority};
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean: f64,
    pub p50: u64,
    pub p95: u64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over `values`.
    pub fn from_values(mut values: Vec<u64>) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        values.sort_unstable();
        let n = values.len();
        let rank = |p: f64| values[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n as u64,
            mean: values.iter().sum::<u64>() as f64 / n as f64,
            p50: rank(0.50),
            p95: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolUtilization {
    pub pool_id: PoolId,
    pub mean_cpu: f64,
    pub mean_ram: f64,
    pub samples: u64,
}

/// Aggregate statistics. Latency is completion tick minus arrival tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub ticks: u64,
    pub simulated_seconds: f64,
    pub arrived: u64,
    pub completed: u64,
    pub terminal_failures: u64,
    pub unfinished_running: u64,
    pub unfinished_queued: u64,
    pub oom_events: u64,
    pub preemptions: u64,
    pub containers_created: u64,
    pub throughput_per_second: f64,
    pub latency_ticks: BTreeMap<String, LatencyStats>,
    pub utilization: Vec<PoolUtilization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub config: SimConfig,
    /// Ticks executed; also the tick carried by `unfinished` events.
    pub end_tick: Tick,
    pub events: Vec<Event>,
    pub samples: Vec<UtilizationSample>,
    pub pipelines: BTreeMap<PipelineId, PipelineRecord>,
    pub summary: Summary,
}

impl SimulationReport {
    pub(super) fn build(
        config: SimConfig,
        end_tick: Tick,
        events: Vec<Event>,
        samples: Vec<UtilizationSample>,
        pipelines: BTreeMap<PipelineId, PipelineRecord>,
    ) -> Self {
        let count = |k: EventKind| events.iter().filter(|e| e.kind == k).count() as u64;
        let simulated_seconds = end_tick.0 as f64 / TICKS_PER_SECOND as f64;
        let completed = count(EventKind::Completed);

        let mut latency_ticks = BTreeMap::new();
        for p in Priority::ALL {
            let values = pipelines
                .values()
                .filter(|r| r.priority == p)
                .filter_map(PipelineRecord::latency)
                .collect();
            latency_ticks.insert(p.as_str().to_string(), LatencyStats::from_values(values));
        }

        let mut per_pool: BTreeMap<PoolId, (f64, f64, u64)> = BTreeMap::new();
        for s in &samples {
            let slot = per_pool.entry(s.pool_id).or_default();
            slot.0 += s.cpu_allocated as f64 / s.cpu_capacity as f64;
            slot.1 += s.ram_allocated as f64 / s.ram_capacity as f64;
            slot.2 += 1;
        }
        let utilization = per_pool
            .into_iter()
            .map(|(pool_id, (cpu, ram, n))| PoolUtilization {
                pool_id,
                mean_cpu: cpu / n as f64,
                mean_ram: ram / n as f64,
                samples: n,
            })
            .collect();

        let unfinished = pipelines.values().filter(|r| r.unfinished_tick.is_some());
        let unfinished_running = unfinished.clone().filter(|r| r.live_at_end > 0).count() as u64;
        let unfinished_queued = unfinished.filter(|r| r.live_at_end == 0).count() as u64;

        let summary = Summary {
            ticks: end_tick.0,
            simulated_seconds,
            arrived: count(EventKind::Arrived),
            completed,
            terminal_failures: count(EventKind::TerminalFailure),
            unfinished_running,
            unfinished_queued,
            oom_events: count(EventKind::Oom),
            preemptions: count(EventKind::Preempted),
            containers_created: count(EventKind::ContainerCreated),
            throughput_per_second: if simulated_seconds > 0.0 {
                completed as f64 / simulated_seconds
            } else {
                0.0
            },
            latency_ticks,
            utilization,
        };
        Self {
            config,
            end_tick,
            events,
            samples,
            pipelines,
            summary,
        }
    }

    pub fn final_tick(&self) -> Tick {
        self.end_tick
    }

    /// Sorted keys, floats rounded to 6 significant digits, trailing newline.
    pub fn summary_json(&self) -> String {
        let mut root = serde_json::Map::new();
        root.insert("config".into(), serde_json::to_value(&self.config).expect("config serializes"));
        root.insert("summary".into(), serde_json::to_value(&self.summary).expect("summary serializes"));
        let mut value = Value::Object(root);
        round_floats(&mut value);
        let mut s = serde_json::to_string_pretty(&value).expect("json");
        s.push('\n');
        s
    }

    pub fn utilization_csv(&self) -> String {
        let mut out = String::from("tick,pool_id,cpu_allocated,cpu_capacity,ram_allocated,ram_capacity\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.tick, s.pool_id, s.cpu_allocated, s.cpu_capacity, s.ram_allocated, s.ram_capacity
            ));
        }
        out
    }

    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64"), 6);
            if let Some(r) = serde_json::Number::from_f64(x) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsRecorder;

    #[test]
    fn latency_stats() {
        let s = LatencyStats::from_values(vec![300, 100, 200]);
        assert_eq!((s.count, s.mean, s.p50, s.p95), (3, 200.0, 200, 300));
        assert_eq!(LatencyStats::from_values(vec![]), LatencyStats::default());
    }

    #[test]
    fn empty_run_is_zeroed() {
        let rep = MetricsRecorder::new().finalize(Tick(100_000), SimConfig::default()).unwrap();
        let s = &rep.summary;
        assert_eq!((s.arrived, s.completed, s.terminal_failures, s.oom_events), (0, 0, 0, 0));
        assert_eq!(s.throughput_per_second, 0.0);
        assert!(s.latency_ticks.values().all(|l| *l == LatencyStats::default()));
        assert!(rep.summary_json().contains("\"throughput_per_second\": 0.0"));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(1.0 / 3.0, 6), 0.333333);
        assert_eq!(round_sig(123456789.0, 6), 123457000.0);
        assert_eq!(round_sig(0.0, 6), 0.0);
    }

    #[test]
    fn csv_header() {
        let rep = MetricsRecorder::new().finalize(Tick(1), SimConfig::default()).unwrap();
        assert_eq!(
            rep.utilization_csv(),
            "tick,pool_id,cpu_allocated,cpu_capacity,ram_allocated,ram_capacity\n"
        );
    }
}
