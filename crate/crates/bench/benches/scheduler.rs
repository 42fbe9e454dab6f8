use criterion::{criterion_group, criterion_main, Criterion};

use neural_cache::scheduler::{simulate_schedule, Durations, SchedulerConfig};

fn scheduler(c: &mut Criterion) {
    let d = Durations::REFERENCE;
    c.bench_function("simulate sequential 1000", |b| {
        b.iter(|| simulate_schedule(&SchedulerConfig::sequential(2), &d, 1000).unwrap())
    });
    c.bench_function("simulate parallel 1000", |b| {
        b.iter(|| simulate_schedule(&SchedulerConfig::parallel(2, 2), &d, 1000).unwrap())
    });
}

criterion_group!(benches, scheduler);
criterion_main!(benches);
