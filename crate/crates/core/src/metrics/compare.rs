//! Simulated versus observed runtimes, as a percent-error table.

use super::{MetricsError, SimulationReport};
use crate::workload::PipelineId;
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub pipeline_id: PipelineId,
    pub simulated_ticks: u64,
    pub observed_ticks: f64,
    pub percent_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// |simulated − observed| / observed × 100.
pub fn percent_error(simulated: f64, observed: f64) -> f64 {
    (simulated - observed).abs() / observed * 100.0
}

pub fn compare_runtimes(
    simulated: &BTreeMap<PipelineId, u64>,
    observed: &[(PipelineId, f64)],
) -> Result<ComparisonTable, MetricsError> {
    let mut rows = Vec::with_capacity(observed.len());
    for &(id, obs) in observed {
        let sim = *simulated.get(&id).ok_or(MetricsError::MissingPipeline(id))?;
        rows.push(ComparisonRow {
            pipeline_id: id,
            simulated_ticks: sim,
            observed_ticks: obs,
            percent_error: percent_error(sim as f64, obs),
        });
    }
    let errors = rows.iter().map(|r| r.percent_error);
    let (min, max, mean) = if rows.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            errors.clone().fold(f64::INFINITY, f64::min),
            errors.clone().fold(f64::NEG_INFINITY, f64::max),
            errors.sum::<f64>() / rows.len() as f64,
        )
    };
    Ok(ComparisonTable { rows, min, mean, max })
}

/// Compares each observed pipeline against its runtime in `report`
/// (first container start to completion).
pub fn compare_to_trace(
    report: &SimulationReport,
    observed: &[(PipelineId, f64)],
) -> Result<ComparisonTable, MetricsError> {
    let simulated: BTreeMap<PipelineId, u64> = report
        .pipelines
        .iter()
        .filter_map(|(id, r)| Some((*id, r.runtime_ticks()?)))
        .collect();
    compare_runtimes(&simulated, observed)
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pipeline_id,simulated_ticks,observed_ticks,percent_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                r.pipeline_id, r.simulated_ticks, r.observed_ticks, r.percent_error
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula() {
        assert_eq!(percent_error(100.0, 100.0), 0.0);
        assert!((percent_error(103.0, 100.0) - 3.0).abs() < 1e-12);
        assert!((percent_error(97.0, 100.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn table_stats_and_missing() {
        let sim: BTreeMap<_, _> = [(PipelineId(0), 100), (PipelineId(1), 103)].into();
        let t = compare_runtimes(&sim, &[(PipelineId(0), 100.0), (PipelineId(1), 100.0)]).unwrap();
        assert_eq!(t.min, 0.0);
        assert!((t.max - 3.0).abs() < 1e-12);
        assert!((t.mean - 1.5).abs() < 1e-12);
        assert!(t.to_csv().starts_with("pipeline_id,simulated_ticks,observed_ticks,percent_error\n0,100,100,0.000000\n"));
        assert_eq!(
            compare_runtimes(&sim, &[(PipelineId(9), 1.0)]),
            Err(MetricsError::MissingPipeline(PipelineId(9)))
        );
    }
}
