use super::{Operator, OperatorId, Pipeline, PipelineId, Priority, ScalingFn};
use crate::clock::Tick;
use crate::config::SimConfig;
use crate::rng::SimRng;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Distribution parameters for synthetic pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub waiting_ticks_mean: u64,
    pub pipeline_ops_mean: f64,
    pub op_base_ticks_mean: f64,
    pub op_ram_mib_mean: f64,
    pub priority_weights: [f64; 3],
    pub scaling_mix: [f64; 3],
    pub sigma_frac: f64,
}

impl From<&SimConfig> for GeneratorParams {
    fn from(c: &SimConfig) -> Self {
        Self {
            waiting_ticks_mean: c.waiting_ticks_mean,
            pipeline_ops_mean: c.pipeline_ops_mean,
            op_base_ticks_mean: c.op_base_ticks_mean,
            op_ram_mib_mean: c.op_ram_mib_mean,
            priority_weights: c.priority_weights,
            scaling_mix: c.scaling_mix,
            sigma_frac: c.sigma_frac,
        }
    }
}

const AMDAHL_SERIAL_RANGE: (f64, f64) = (0.1, 0.9);

#[derive(Debug)]
pub struct WorkloadGenerator {
    params: GeneratorParams,
    rng: SimRng,
    arrival_p: f64,
    next_id: u64,
}

impl WorkloadGenerator {
    pub fn new(params: GeneratorParams, rng: SimRng) -> Self {
        let arrival_p = 1.0 / params.waiting_ticks_mean.max(1) as f64;
        Self {
            params,
            rng,
            arrival_p,
            next_id: 0,
        }
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    /// Bernoulli trial with p = 1 / waiting_ticks_mean; at most one arrival per tick.
    pub fn poll(&mut self, tick: Tick) -> Vec<Pipeline> {
        if self.rng.random::<f64>() < self.arrival_p {
            vec![self.generate_pipeline(tick)]
        } else {
            Vec::new()
        }
    }

    pub fn generate_pipeline(&mut self, arrival: Tick) -> Pipeline {
        let id = PipelineId(self.next_id);
        self.next_id += 1;

        let priority = Priority::ALL[pick(&mut self.rng, &self.params.priority_weights)];
        let n_ops = self.sample_centered_int(self.params.pipeline_ops_mean);
        let mut operators = Vec::with_capacity(n_ops as usize);
        for i in 0..n_ops as OperatorId {
            let parents = self.draw_parents(i);
            let ram_mib = self.sample_centered_int(self.params.op_ram_mib_mean);
            let base_ticks = self.sample_centered_int(self.params.op_base_ticks_mean);
            let scaling = match pick(&mut self.rng, &self.params.scaling_mix) {
                0 => ScalingFn::Constant,
                1 => ScalingFn::Linear,
                _ => ScalingFn::Amdahl(
                    self.rng
                        .random_range(AMDAHL_SERIAL_RANGE.0..=AMDAHL_SERIAL_RANGE.1),
                ),
            };
            operators.push(Operator {
                id: i,
                parents,
                ram_mib,
                base_ticks,
                scaling,
            });
        }
        Pipeline {
            id,
            arrival_tick: arrival,
            priority,
            operators,
        }
    }

    // Operator 0 is the root; every later operator has one or two distinct earlier parents.
    fn draw_parents(&mut self, i: OperatorId) -> Vec<OperatorId> {
        if i == 0 {
            return Vec::new();
        }
        let want = self.rng.random_range(1..=2u32).min(i);
        let mut parents: Vec<OperatorId> = index::sample(&mut self.rng, i as usize, want as usize)
            .into_iter()
            .map(|p| p as OperatorId)
            .collect();
        parents.sort_unstable();
        parents
    }

    /// Normal draw with sd = sigma_frac * mean, resampled until it is >= 1.
    pub fn sample_centered(&mut self, mean: f64) -> f64 {
        sample_centered(&mut self.rng, mean, self.params.sigma_frac)
    }

    fn sample_centered_int(&mut self, mean: f64) -> u64 {
        (self.sample_centered(mean).round() as u64).max(1)
    }
}

pub(crate) fn sample_centered<R: Rng + ?Sized>(rng: &mut R, mean: f64, sigma_frac: f64) -> f64 {
    let mean = mean.max(1.0);
    let sd = sigma_frac * mean;
    if sd == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sd).expect("finite, non-negative sd");
    loop {
        let x = normal.sample(rng);
        if x >= 1.0 {
            return x;
        }
    }
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: &[f64; 3]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Floating slack at the top end goes to the last nonzero bucket.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}
