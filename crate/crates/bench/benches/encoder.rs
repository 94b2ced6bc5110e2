use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gal_bench::fixtures;
use gal_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn encoder(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder");
    group.sample_size(20);
    for size in [32, 64] {
        let (_, inst) = fixtures(size).remove(0);
        let enc = Encoder::<f32>::new(EncoderConfig::default(), 0);
        group.bench_with_input(BenchmarkId::new("inference", size), &inst, |b, inst| {
            b.iter(|| enc.guidance(inst).unwrap())
        });
        let input = assemble_input::<f32>(&inst, InputMode::MapStartGoal);
        group.bench_with_input(
            BenchmarkId::new("forward_backward", size),
            &input,
            |b, input| {
                b.iter(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    let out = enc.encode(input, true, &mut rng).unwrap();
                    out.sum().backward_grads().unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, encoder);
criterion_main!(benches);
