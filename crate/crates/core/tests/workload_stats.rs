use eudoxia::rng::{stream, Stream};
use eudoxia::workload::{GeneratorParams, WorkloadGenerator};
use eudoxia::{Priority, ScalingFn, SimConfig, Tick};

fn generator(cfg: &SimConfig) -> WorkloadGenerator {
    WorkloadGenerator::new(GeneratorParams::from(cfg), stream(cfg.seed, Stream::Workload))
}

#[test]
fn arrival_rate_matches_waiting_mean_across_seeds() {
    // Bernoulli arrivals with p = 1/50000 over 100000 ticks: about two per
    // run. A Monte-Carlo check of this process puts the 100-run pooled mean
    // gap within 20% of 50000 more than 99% of the time.
    let mut total = 0u64;
    for seed in 0..100 {
        let cfg = SimConfig { seed, ..SimConfig::default() };
        let mut g = generator(&cfg);
        let mut n = 0u64;
        let mut last = None;
        for t in 0..100_000 {
            let arrivals = g.poll(Tick(t));
            assert!(arrivals.len() <= 1);
            for p in arrivals {
                assert_eq!(p.arrival_tick, Tick(t));
                if let Some(prev) = last {
                    assert!(p.id > prev);
                }
                last = Some(p.id);
                n += 1;
            }
        }
        assert!(n <= 20, "seed {seed}: {n} arrivals");
        total += n;
    }
    let gap = 100.0 * 100_000.0 / total as f64;
    assert!((gap - 50_000.0).abs() <= 10_000.0, "mean gap {gap}");
}

#[test]
fn sample_means_track_configured_means() {
    let cfg = SimConfig { seed: 5, ..SimConfig::default() };
    let mut g = generator(&cfg);
    let pipelines: Vec<_> = (0..1000).map(|_| g.generate_pipeline(Tick::ZERO)).collect();
    let ops: Vec<_> = pipelines.iter().flat_map(|p| p.operators.iter()).collect();

    let mean_ops = ops.len() as f64 / pipelines.len() as f64;
    let mean_base = ops.iter().map(|o| o.base_ticks as f64).sum::<f64>() / ops.len() as f64;
    let mean_ram = ops.iter().map(|o| o.ram_mib as f64).sum::<f64>() / ops.len() as f64;
    let within = |x: f64, m: f64| (x - m).abs() <= 0.05 * m;
    assert!(within(mean_ops, cfg.pipeline_ops_mean), "ops {mean_ops}");
    assert!(within(mean_base, cfg.op_base_ticks_mean), "base {mean_base}");
    assert!(within(mean_ram, cfg.op_ram_mib_mean), "ram {mean_ram}");

    // Category frequencies within 5 points of their weights.
    let freq = |pred: &dyn Fn(&eudoxia::Pipeline) -> bool| {
        pipelines.iter().filter(|p| pred(p)).count() as f64 / pipelines.len() as f64
    };
    for (i, pr) in Priority::ALL.iter().enumerate() {
        let f = freq(&|p| p.priority == *pr);
        assert!((f - cfg.priority_weights[i]).abs() < 0.05, "{pr}: {f}");
    }
    let kinds = ["constant", "linear", "amdahl"];
    for (i, kind) in kinds.iter().enumerate() {
        let f = ops.iter().filter(|o| o.scaling.kind() == *kind).count() as f64 / ops.len() as f64;
        assert!((f - cfg.scaling_mix[i]).abs() < 0.05, "{kind}: {f}");
    }
    for o in &ops {
        if let ScalingFn::Amdahl(f) = o.scaling {
            assert!((0.1..=0.9).contains(&f));
        }
        assert!(o.base_ticks >= 1 && o.ram_mib >= 1);
    }
}

#[test]
fn generated_dags_are_valid() {
    let cfg = SimConfig { seed: 8, pipeline_ops_mean: 12.0, ..SimConfig::default() };
    let mut g = generator(&cfg);
    for _ in 0..300 {
        let p = g.generate_pipeline(Tick(3));
        p.validate().unwrap();
        assert!(p.operators[0].parents.is_empty());
        for (i, o) in p.operators.iter().enumerate().skip(1) {
            assert!((1..=2).contains(&o.parents.len()));
            assert!(o.parents.iter().all(|&q| (q as usize) < i));
        }
    }
}
