use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nsgate::bound::{numeric_search_with, sample_region_with, SearchConfig};
use nsgate::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn region(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_region");
    for grid_n in [101, 401] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, grid_n), &grid_n, |b, &n| {
                b.iter(|| sample_region_with(n, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("numeric_search");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    let config = SearchConfig::new(3, 1, 7, 7);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "3 modes, 8 starts"), |b| {
            b.iter(|| numeric_search_with(&config, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, region, search);
criterion_main!(benches);
