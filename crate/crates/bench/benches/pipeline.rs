use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kernbench_core::experiment::{deserialize, unroll};
use kernbench_core::plot::{emit_plot, PlotSpec};
use kernbench_core::report::{breakdown, parse_report, series, MachineSpec, Query};

const SWEEP: &str = "#KERNBENCH EXPERIMENT v1
range: n 50:50:2000
nreps: 10
call: dgesv n 500 A n B n
";

const REPORT: &str = include_str!("../../cli/tests/fixtures/lu_sweep.kbr");

fn pipeline(c: &mut Criterion) {
    let exp = deserialize(SWEEP).unwrap();
    c.bench_function("unroll 40x10", |b| {
        b.iter(|| unroll(black_box(&exp)).unwrap())
    });

    c.bench_function("parse_report", |b| {
        b.iter(|| parse_report(black_box(REPORT)).unwrap())
    });

    let report = parse_report(REPORT).unwrap();
    let machine = MachineSpec::default();
    let q = Query {
        metric: "cycles".parse().unwrap(),
        statistic: "median".parse().unwrap(),
        discard_first: true,
    };
    c.bench_function("series", |b| {
        b.iter(|| series(black_box(&report), q, &machine).unwrap())
    });
    c.bench_function("breakdown", |b| {
        b.iter(|| breakdown(black_box(&report), q, &machine).unwrap())
    });

    let spec = PlotSpec {
        metric: "cycles".parse().unwrap(),
        stats: ["min", "median", "max"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect(),
        discard_first: false,
        style: None,
        breakdown: false,
    };
    c.bench_function("emit_plot", |b| {
        b.iter(|| emit_plot(&spec, &[("lu", &report)], &machine).unwrap())
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
