//! Runs the same small matrix of independent worlds through the rayon
//! batch map and the sequential fallback. Without the `parallel` feature
//! both paths are sequential.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use streamckpt_core::batch;
use streamckpt_core::sim::{FailureSpec, Protocol};
use streamckpt_core::workloads::QueryId;
use streamckpt_harness::experiment::Prepared;
use streamckpt_harness::ExperimentConfig;

fn cells() -> Vec<(Prepared, ExperimentConfig)> {
    let mut out = Vec::new();
    for q in [QueryId::Q1, QueryId::Q3, QueryId::Q8, QueryId::Q12] {
        for protocol in [Protocol::Coor, Protocol::Unc, Protocol::Cic] {
            let mut c = ExperimentConfig::for_query(q, 4, protocol);
            c.workload.rate = 500.0;
            c.run.horizon = 6.0;
            c.failures = vec![FailureSpec { time: 3.0, worker: 1 }];
            out.push((Prepared::new(&c).expect("valid config"), c));
        }
    }
    out
}

fn run_cell((prep, c): &(Prepared, ExperimentConfig)) -> u64 {
    prep.run(&c.run_config()).expect("run").trace_hash
}

fn bench(cr: &mut Criterion) {
    let cells = cells();
    let refs: Vec<&(Prepared, ExperimentConfig)> = cells.iter().collect();
    let mut group = cr.benchmark_group("sweep");
    group.sample_size(10);
    group.bench_with_input(BenchmarkId::new("batch_map", refs.len()), &refs, |b, refs| {
        b.iter(|| batch::map(refs.clone(), run_cell))
    });
    group.bench_with_input(BenchmarkId::new("sequential", refs.len()), &refs, |b, refs| {
        b.iter(|| batch::sequential(refs.clone(), run_cell))
    });
    group.finish();
    assert_eq!(batch::map(refs.clone(), run_cell), batch::sequential(refs, run_cell));
}

criterion_group!(benches, bench);
criterion_main!(benches);
