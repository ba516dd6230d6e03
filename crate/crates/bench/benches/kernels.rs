use caflow_bench::cone_window;
use caflow_core::catalog;
use caflow_core::flow::{flow_at, FlowParams};
use caflow_core::perturbation::lyapunov_exact;
use caflow_core::trace_class::{class_measure_exact, count_t_exact, DEFAULT_BUDGET};
use caflow_core::velocity::g_window;
use caflow_core::VelocitySpec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn trace_dp(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_t_exact");
    for name in ["rule30", "rule90", "prod2"] {
        let rule = catalog::rule(name).unwrap();
        let m = catalog::measure("uniform", rule.k()).unwrap();
        for n in [4usize, 8] {
            let x = cone_window(&rule, &m, 1, n, 1);
            let r = rule.radius();
            let g = g_window(1, r * n, r * n);
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| count_t_exact(&rule, &m, black_box(&x), 1, n, g, DEFAULT_BUDGET).unwrap())
            });
        }
    }
    group.finish();
}

fn class_measure(c: &mut Criterion) {
    let mut group = c.benchmark_group("class_measure_exact");
    let rule = catalog::rule("rule30").unwrap();
    for preset in ["uniform", "markov", "sturmian"] {
        let m = catalog::measure(preset, 2).unwrap();
        let x = cone_window(&rule, &m, 2, 8, 2);
        group.bench_function(preset, |b| {
            b.iter(|| class_measure_exact(&rule, &m, black_box(&x), 2, 8, DEFAULT_BUDGET).unwrap())
        });
    }
    group.finish();
}

fn exponents(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov_exact");
    let m = catalog::measure("uniform", 2).unwrap();
    for name in ["rule30", "rule110"] {
        let rule = catalog::rule(name).unwrap();
        let x = cone_window(&rule, &m, 0, 16, 3);
        group.bench_function(name, |b| {
            b.iter(|| lyapunov_exact(&rule, black_box(&x), 8, DEFAULT_BUDGET).unwrap())
        });
    }
    group.finish();
}

fn flow(c: &mut Criterion) {
    let rule = catalog::rule("rule30").unwrap();
    let m = catalog::measure("uniform", 2).unwrap();
    let v = VelocitySpec::linear_int(1, 1).unwrap();
    let params = FlowParams {
        samples: 4,
        ..FlowParams::default()
    };
    c.bench_function("flow_at/rule30_p1_n4", |b| {
        b.iter(|| flow_at(&rule, &m, 1, 4, 0.1, &v, black_box(&params)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = trace_dp, class_measure, exponents, flow
}
criterion_main!(benches);
