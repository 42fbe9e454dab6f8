use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use neural_cache::renderer::generator_forward;
use neural_cache::warp::warp_forward;
use neural_cache_bench::fixture;

fn networks(c: &mut Criterion) {
    let mut g = c.benchmark_group("networks");
    g.sample_size(10);
    for side in [64, 128] {
        let (m, frames) = fixture(side);
        g.bench_with_input(BenchmarkId::new("generator", side), &side, |b, _| {
            b.iter(|| generator_forward(&m.texture, &m.generator, &frames[1], Some(&frames[0])).unwrap())
        });
        let (_, cache) = generator_forward(&m.texture, &m.generator, &frames[0], None).unwrap();
        g.bench_with_input(BenchmarkId::new("warp", side), &side, |b, _| {
            b.iter(|| warp_forward(&m.warp, &cache, &frames[1]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, networks);
criterion_main!(benches);
