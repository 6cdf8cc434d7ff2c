use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rachsim_core::{
    run_scenario, validate_config, SchemeConfig, SystemConfig, TreeModel,
};

fn analytics(c: &mut Criterion) {
    let sys = SystemConfig::default();
    let mut group = c.benchmark_group("analytics_30000");
    for q in [2u16, 3, 6, 9, 27] {
        group.bench_with_input(BenchmarkId::from_parameter(q), &q, |b, &q| {
            b.iter(|| {
                let model = TreeModel::new(30000, sys.n_preambles, q).unwrap();
                let t = model.expected_transmissions(None);
                let r = model.expected_traos();
                let po = model.outage_prob(sys.max_transmissions).unwrap();
                (t, r, po)
            })
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let sys = SystemConfig::default();
    let mut group = c.benchmark_group("burst_run");
    group.sample_size(10);

    let tree = validate_config(sys, SchemeConfig::tree_split(6)).unwrap();
    for n in [1000u32, 10000] {
        group.bench_with_input(BenchmarkId::new("tree6", n), &n, |b, &n| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                run_scenario(&tree, n, seed).unwrap()
            })
        });
    }

    let baseline = validate_config(sys, SchemeConfig::baseline()).unwrap();
    group.bench_with_input(BenchmarkId::new("baseline", 1000u32), &1000, |b, &n| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            run_scenario(&baseline, n, seed).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, analytics, simulation);
criterion_main!(benches);
