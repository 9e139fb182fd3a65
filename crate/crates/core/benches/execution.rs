use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use wfp_market::check::{self, CheckConfig};
use wfp_market::scenario::{presets, run};
use wfp_market::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn property_suites(c: &mut Criterion) {
    let cfg = CheckConfig::scaled(7, 10_000);
    let mut group = c.benchmark_group("property_suites");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("isp_covers_cost", name), &exec, |b, &exec| {
            b.iter(|| check::theorem_cost_cover(black_box(&cfg), exec))
        });
        group.bench_with_input(BenchmarkId::new("best_response_grid", name), &exec, |b, &exec| {
            b.iter(|| check::best_response_grid(black_box(&cfg), exec))
        });
    }
    group.finish();
}

fn presets_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("presets");
    group.sample_size(10);
    for preset in ["scenario2", "iwfp-ceiling", "iwfp-topology"] {
        let cfg = presets::load(preset).expect("bundled preset");
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(preset, name), &exec, |b, &exec| {
                b.iter(|| run(black_box(&cfg), exec).expect("preset runs"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, property_suites, presets_runs);
criterion_main!(benches);
