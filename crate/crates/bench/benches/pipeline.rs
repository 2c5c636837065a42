use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pnc_bench::{example_one, random};
use pnc_core::auction::run_auction_then_pnc;
use pnc_core::harness::prepare;
use pnc_core::mechanism::{audit_first_mover_bound, identity_order, run_pnc, Mode};
use pnc_core::menu::{enumerate_grid, GridConfig, ShareScope};

fn grid(c: &mut Criterion) {
    let config = example_one();
    let space = config.state_space().unwrap();
    let x = config.aggregate().unwrap();
    let mut g = c.benchmark_group("enumerate_grid");
    for r in [20u32, 70, 140] {
        let cfg = GridConfig::new(r).with_scope(ShareScope::Uniform);
        g.bench_with_input(BenchmarkId::from_parameter(r), &cfg, |b, cfg| {
            b.iter(|| enumerate_grid(&space, &x, 3, black_box(cfg)).unwrap())
        });
    }
    g.finish();
}

fn mechanism(c: &mut Criterion) {
    let mut g = c.benchmark_group("mechanism");
    for (label, config) in [("example1", example_one()), ("random", random(3, 5_000))] {
        let prep = prepare(&config).unwrap();
        let ctx = prep.context();
        let order = identity_order(config.agents.len());
        g.bench_function(BenchmarkId::new("exact", label), |b| {
            b.iter(|| run_pnc(&ctx, Mode::Exact, &order).unwrap())
        });
        g.bench_function(BenchmarkId::new("perturbed", label), |b| {
            b.iter(|| run_pnc(&ctx, Mode::perturbed_default(), &order).unwrap())
        });
        g.bench_function(BenchmarkId::new("auction", label), |b| {
            b.iter(|| run_auction_then_pnc(&ctx, 1).unwrap())
        });
        let exact = run_pnc(&ctx, Mode::Exact, &order).unwrap();
        g.bench_function(BenchmarkId::new("deviation_audit_10", label), |b| {
            b.iter(|| audit_first_mover_bound(&ctx, &exact, 10, 1).unwrap())
        });
    }
    g.finish();
}

fn tabulate(c: &mut Criterion) {
    let config = example_one();
    c.bench_function("prepare/example1", |b| {
        b.iter(|| prepare(black_box(&config)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = grid, tabulate, mechanism
}
criterion_main!(benches);
