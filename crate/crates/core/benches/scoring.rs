//! Candidate scoring in the optimizer, sequential against rayon.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use yplus::fixtures;
use yplus::gen;
use yplus::model::SumProduct;
use yplus::optimizer::{choose_plan, collect_stats, CeMode, OptimizerConfig, SchemaConstraints};
use yplus::par::Parallelism;

fn scoring(c: &mut Criterion) {
    let q = fixtures::q1();
    let mut group = c.benchmark_group("choose_plan");
    group.sample_size(20);
    for rows in [200, 2_000] {
        let db = gen::q1_skewed::<SumProduct>(rows, 1.1, 8);
        let stats = collect_stats(&q, &db, CeMode::Accurate).expect("stats");
        for par in [Parallelism::Sequential, Parallelism::Parallel] {
            let cfg = OptimizerConfig {
                parallelism: par,
                ..OptimizerConfig::default()
            };
            let cons = SchemaConstraints::default();
            group.bench_with_input(BenchmarkId::new(format!("dry_run/{}", par.name()), rows), &rows, |b, _| {
                b.iter(|| choose_plan(&q, &stats, &cons, &cfg, Some(&db)).expect("plan"))
            });
            group.bench_with_input(BenchmarkId::new(format!("estimate/{}", par.name()), rows), &rows, |b, _| {
                b.iter(|| choose_plan(&q, &stats, &cons, &cfg, None).expect("plan"))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, scoring);
criterion_main!(benches);
