use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use flowbook_bench::{options, program_pair, warm_engine, wide_table};
use flowbook_core::{compile, fingerprint, Engine, ExecutionPlan, Mode, Session, Value};

fn bench_compile(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let mut group = c.benchmark_group("compile");
    for ops in [10, 30, 100] {
        let (source, _) = program_pair(dir.path(), ops, ops as u64);
        let opts = options(dir.path(), true);
        group.bench_with_input(BenchmarkId::from_parameter(ops), &source, |b, s| {
            b.iter(|| compile(black_box(s), &opts).unwrap())
        });
    }
    group.finish();
}

fn bench_plan(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let (source, _) = program_pair(dir.path(), 100, 1);
    let compiled = compile(&source, &options(dir.path(), true)).unwrap();
    let last = compiled.graph.nodes().last().unwrap().outputs[0].clone();
    c.bench_function("plan/full_100", |b| {
        b.iter(|| ExecutionPlan::for_all(black_box(&compiled.graph)).unwrap())
    });
    c.bench_function("plan/target_100", |b| {
        b.iter(|| ExecutionPlan::for_target(black_box(&compiled.graph), last.as_str()).unwrap())
    });
}

fn bench_fingerprint(c: &mut Criterion) {
    let mut group = c.benchmark_group("fingerprint");
    for rows in [1_000, 10_000] {
        let value = Value::Table(wide_table(rows));
        group.bench_with_input(BenchmarkId::from_parameter(rows), &value, |b, v| {
            b.iter(|| fingerprint(black_box(v)))
        });
    }
    group.finish();
}

fn bench_execute(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let (before, after) = program_pair(dir.path(), 30, 7);
    let mut group = c.benchmark_group("execute");
    for parallel in [false, true] {
        let name = if parallel {
            "cold_parallel"
        } else {
            "cold_sequential"
        };
        group.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let mut e = Engine::new(options(dir.path(), parallel), Session::in_memory());
                    e.load(&before).unwrap();
                    e
                },
                |mut e| e.update(Mode::Checked, &|_| {}).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    for mode in [Mode::Eager, Mode::Checked] {
        let name = format!("after_edit_{mode:?}").to_lowercase();
        group.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let mut e = warm_engine(dir.path(), &before);
                    e.load(&after).unwrap();
                    e
                },
                |mut e| e.update(mode, &|_| {}).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.bench_function("noop_update", |b| {
        b.iter_batched(
            || warm_engine(dir.path(), &before),
            |mut e| e.update(Mode::Checked, &|_| {}).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_compile,
    bench_plan,
    bench_fingerprint,
    bench_execute
);
criterion_main!(benches);
