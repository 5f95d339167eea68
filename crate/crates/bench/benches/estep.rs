use btot_bench::{corpus, state};
use btot_core::model::{sweep, SweepOptions};
use btot_core::ModelKind;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn sweep_vs_k(c: &mut Criterion) {
    let docs = corpus(1000, 200, 100.0);
    let opts = SweepOptions { e_tol: 0.0, e_max_iter: 10, use_time: true, accumulate: true };
    let mut g = c.benchmark_group("sweep_vs_k");
    g.throughput(Throughput::Elements(docs.num_tokens()));
    for k in [5, 10, 20, 40] {
        let st = state(ModelKind::Wbtot, k, 1000);
        g.bench_with_input(BenchmarkId::from_parameter(k), &st, |b, st| {
            b.iter(|| sweep(st, &docs.documents, None, &opts).unwrap())
        });
    }
    g.finish();
}

fn sweep_by_model(c: &mut Criterion) {
    let docs = corpus(500, 200, 50.0);
    let opts = SweepOptions { e_tol: 0.0, e_max_iter: 10, use_time: true, accumulate: true };
    let mut g = c.benchmark_group("sweep_by_model");
    for kind in [ModelKind::Lda, ModelKind::Tot, ModelKind::Btot, ModelKind::Wbtot] {
        let st = state(kind, 10, 500);
        g.bench_function(kind.to_string(), |b| b.iter(|| sweep(&st, &docs.documents, None, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, sweep_vs_k, sweep_by_model);
criterion_main!(benches);
