//! Single-thread pool against the default rayon pool on the three hot paths:
//! critical-value generation, macro-replications, and per-batch evaluation.
//!
//! Build with `--no-default-features` to time the sequential fallback instead.

use std::hint::black_box;

use batchuq::harness::{self, ExperimentPlan, Variant};
use batchuq::table::sample_norms;
use batchuq::{stream, BatchCount, BatchLayout, Functional, Method, NormOrder, TableKey, TableSource};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let max = rayon::current_num_threads();
    let mut out = vec![("1".to_string(), rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if max > 1 {
        out.push((max.to_string(), rayon::ThreadPoolBuilder::new().num_threads(max).build().unwrap()));
    }
    out
}

fn table_generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("critical_values");
    g.sample_size(10);
    let key = TableKey { method: Method::Ob1, beta: 0.2, b: BatchCount::Infinite, d: 1, p: NormOrder::L2 };
    for (threads, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("inf_grid1024", &threads), &key, |bch, key| {
            bch.iter(|| pool.install(|| black_box(sample_norms(key, 8192, 1024, 1).unwrap())))
        });
    }
    g.finish();
}

fn macro_replications(c: &mut Criterion) {
    let mut g = c.benchmark_group("coverage");
    g.sample_size(10);
    let plan = ExperimentPlan { macro_reps: 200, truth_n: 100_000, ..ExperimentPlan::gamma() };
    let truth = harness::approximate_truth(&plan).unwrap();
    let tables = TableSource::new(None, 4000, 512, 1).unwrap();
    for (threads, pool) in pools() {
        g.bench_function(BenchmarkId::new("gamma_n1000_k200", &threads), |bch| {
            bch.iter(|| pool.install(|| black_box(harness::run_coverage(&plan, 1000, &Variant::FOB1, &truth, &tables).unwrap())))
        });
    }
    g.finish();
}

fn batch_evaluation(c: &mut Criterion) {
    let mut g = c.benchmark_group("batches");
    let mut rng = stream::rng(1, "bench", 0, 0);
    let series = batchuq::testbeds::gen_gamma_iid(100_000, 1.0, 100.0, &mut rng).unwrap();
    let layout = BatchLayout::plan(100_000, 500, 250).unwrap();
    let f = Functional::quantiles(vec![0.99]).unwrap();
    for (threads, pool) in pools() {
        g.bench_function(BenchmarkId::new("quantile_n1e5_m500", &threads), |bch| {
            bch.iter(|| pool.install(|| black_box(f.evaluate_batches(&series, &layout).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, table_generation, macro_replications, batch_evaluation);
criterion_main!(benches);
