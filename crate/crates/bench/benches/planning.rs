use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gal_bench::fixtures;
use gal_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn classic(c: &mut Criterion) {
    let mut group = c.benchmark_group("plan");
    for (kind, inst) in fixtures(64) {
        for (name, policy) in [
            ("vanilla", SearchPolicy::vanilla()),
            ("weighted_0.2", SearchPolicy::weighted(0.2).unwrap()),
            ("beam_16", SearchPolicy::beam(0.5, 16).unwrap()),
        ] {
            group.bench_with_input(BenchmarkId::new(name, kind), &inst, |b, inst| {
                b.iter(|| plan(inst, &policy, None).unwrap())
            });
        }
    }
    group.finish();
}

fn differentiable(c: &mut Criterion) {
    let mut group = c.benchmark_group("differentiable_plan");
    group.sample_size(20);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (kind, inst) in fixtures(32) {
        let values: Vec<f32> = (0..inst.map.len()).map(|_| rng.gen()).collect();
        for mode in [SelectionMode::Hard, SelectionMode::Soft] {
            let mut config = DiffAstarConfig::new(0.2, 32);
            config.mode = mode;
            let id = BenchmarkId::new(format!("{mode:?}").to_lowercase(), kind);
            group.bench_with_input(id, &inst, |b, inst| {
                b.iter(|| {
                    let g = Tensor::parameter(&[32, 32], values.clone()).unwrap();
                    let trace =
                        differentiable_plan(&g, inst, &config, &Temperature::Fixed(32f32.sqrt()))
                            .unwrap();
                    let gt = vec![false; inst.map.len()];
                    closed_list_loss(&trace, &gt, &inst.map)
                        .unwrap()
                        .backward()
                        .unwrap();
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, classic, differentiable);
criterion_main!(benches);
