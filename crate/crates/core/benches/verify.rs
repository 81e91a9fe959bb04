//! Parallel vs sequential execution of numeric verification.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qpreduce::exec::ExecMode;
use qpreduce::verify::verify_sweep;
use qpreduce::{
    lower, parse, reduce, verify_reduction, QPSystem, Rational, ReduceOptions, VerifyOptions,
};

fn riccati(n: usize) -> (QPSystem, BTreeMap<String, Rational>) {
    let params: Vec<String> = (1..=n)
        .map(|i| format!("l{i}"))
        .chain((1..=n).map(|i| format!("a{i}")))
        .collect();
    let sum: Vec<String> = (1..=n).map(|j| format!("a{j}*x{j}")).collect();
    let mut text = format!("params: {};\n", params.join(", "));
    for i in 1..=n {
        text.push_str(&format!("x{i}' = l{i}*x{i} + x{i}*({})\n", sum.join(" + ")));
    }
    let sys = lower(&parse(&text).unwrap()).unwrap();
    let values = (1..=n)
        .flat_map(|i| {
            [
                (format!("l{i}"), Rational::from_integer((i as i64).into())),
                (format!("a{i}"), Rational::from_integer((-1).into())),
            ]
        })
        .collect();
    (sys, values)
}

fn modes() -> [(&'static str, ExecMode); 2] {
    [
        ("parallel", ExecMode::Parallel),
        ("sequential", ExecMode::Sequential),
    ]
}

fn bench_sweep(c: &mut Criterion) {
    let (sys, values) = riccati(5);
    let result = reduce(&sys, &ReduceOptions::default()).unwrap();
    let x0 = vec![1.0; 5];
    let tols = [1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11];
    let mut group = c.benchmark_group("verify_sweep");
    for (name, mode) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| verify_sweep(&sys, &result, &values, &x0, 0.5, &tols, mode))
        });
    }
    group.finish();
}

fn bench_single(c: &mut Criterion) {
    let (sys, values) = riccati(5);
    let result = reduce(&sys, &ReduceOptions::default()).unwrap();
    let x0 = vec![1.0; 5];
    let mut group = c.benchmark_group("verify_reduction_2000_samples");
    for (name, mode) in modes() {
        let opts = VerifyOptions {
            tol: 1e-10,
            samples: 2000,
            mode,
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| verify_reduction(&sys, &result, &values, &x0, 0.5, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_single);
criterion_main!(benches);
