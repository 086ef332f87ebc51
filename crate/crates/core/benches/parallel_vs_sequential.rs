//! Market clearing with the operators' subproblems solved one after another
//! versus on the rayon pool. Without the `parallel` feature both variants
//! run sequentially, which makes the fallback's overhead visible too.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmg_core::domain::{load_config, MmgConfig};
use mmg_core::market::{clear_market_with, run_isolated_with, MarketOptions};
use mmg_core::parallel::Execution;
use mmg_core::scenarios::{deterministic_scenarios, robust_scenarios};

fn case_study() -> MmgConfig {
    load_config(include_str!("../data/case_study.toml")).unwrap()
}

fn clearing(c: &mut Criterion) {
    let config = case_study();
    let scen = deterministic_scenarios(&config);
    let mut group = c.benchmark_group("clear_deterministic_case");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let opts = MarketOptions {
            execution: exec,
            ..MarketOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| clear_market_with(&config, &scen, opts).unwrap())
        });
    }
    group.finish();
}

fn isolated(c: &mut Criterion) {
    // one robust solve per microgrid, the unit of work a market round fans out
    let config = case_study();
    let scen = robust_scenarios(&config).unwrap();
    let mut group = c.benchmark_group("isolated_robust_case");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_isolated_with(&config, &scen, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, clearing, isolated);
criterion_main!(benches);
