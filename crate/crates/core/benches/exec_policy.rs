//! Sequential against parallel execution of the data-parallel loops.
//!
//! Set `NETIDENT_THREADS` to size the pool. Built without the `parallel`
//! feature both variants run on the calling thread.

use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netident::estimation::{
    montecarlo_bias, EntryOrders, IdentifyConfig, ModelOrders, MonteCarloConfig, Setup,
};
use netident::model::{parse_network, uniform_grid, NetworkSpec};
use netident::selection::select_full_input;
use netident::simulation::ExcitationConfig;
use netident::transform::transform_network;
use netident::transform::verify::second_order_check_with;
use netident::ExecPolicy;

fn fixture(name: &str) -> NetworkSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(format!("{name}.json"));
    parse_network(&std::fs::read_to_string(path).expect("fixture readable"))
        .expect("fixture parses")
}

const POLICIES: [(&str, ExecPolicy); 2] = [
    ("sequential", ExecPolicy::Sequential),
    ("parallel", ExecPolicy::Parallel),
];

fn second_order(c: &mut Criterion) {
    let net = fixture("eight_node");
    let sel = select_full_input(&net, 1, 0).expect("selection");
    let tn = transform_network(&net, &sel).expect("transform");
    let grid = uniform_grid(256);
    let mut group = c.benchmark_group("second_order_check");
    for (name, policy) in POLICIES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &policy, |b, &p| {
            b.iter(|| second_order_check_with(&net, &tn, &grid, p).expect("check"))
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let net = fixture("two_node");
    let sel = select_full_input(&net, 0, 1).expect("selection");
    let orders = ModelOrders {
        g: EntryOrders::new(1, 1, 1),
        nc: 1,
        ..ModelOrders::default()
    };
    let setup = Setup::Mimo { sel, orders };
    let mut group = c.benchmark_group("montecarlo_bias");
    group.sample_size(10);
    for (name, policy) in POLICIES {
        let mut cfg = MonteCarloConfig::new(4, 2000, 1, ExcitationConfig::white(1, 1.0));
        cfg.identify = IdentifyConfig {
            restarts: 2,
            policy,
            ..IdentifyConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| montecarlo_bias(&net, &setup, cfg).expect("monte carlo"))
        });
    }
    group.finish();
}

fn configure(c: &mut Criterion) {
    netident::par::init_threads_from_env();
    second_order(c);
    monte_carlo(c);
}

criterion_group!(benches, configure);
criterion_main!(benches);
