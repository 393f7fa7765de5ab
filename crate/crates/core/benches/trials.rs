use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dkf_core::dkf::{consensus_round_into, default_delta};
use dkf_core::model::{solve_riccati, RICCATI_MAX_ITER, RICCATI_TOL};
use dkf_core::pushsum::default_eps;
use dkf_core::sim::{GainSource, TrialRecord, TrialSetup};
use dkf_core::{ConsensusParams, ExecMode, Graph, LinkFailureModel, Plant, RoundKey};
use nalgebra::DMatrix;

fn run_many(c: &mut Criterion) {
    let plant = Plant::planar_tracker(0.25, 0.05, 0.1).unwrap();
    let sol = solve_riccati(&plant, RICCATI_TOL, RICCATI_MAX_ITER).unwrap();
    let g = Graph::default_topology();
    let links = LinkFailureModel::new(g.clone(), 0.7, 1).unwrap();
    let params = ConsensusParams::new(default_delta(&g).unwrap(), 4, &g, false).unwrap().0;
    let setup = TrialSetup {
        plant: &plant,
        sol: &sol,
        links: &links,
        params,
        gains: GainSource::Frozen { leader: 0, eps: default_eps(&plant), max_rounds: 2000 },
        horizon: 150,
        window_start: 30,
        noise_seed: 5,
    };
    let mut group = c.benchmark_group("run_many_32_trials");
    group.sample_size(10);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &mode, |b, &mode| {
            b.iter(|| setup.run_many(32, None, TrialRecord::default(), mode).unwrap())
        });
    }
    group.finish();
}

fn consensus(c: &mut Criterion) {
    let g = Graph::default_topology();
    let links = LinkFailureModel::new(g.clone(), 0.7, 2).unwrap();
    let delta = default_delta(&g).unwrap();
    let z = DMatrix::from_fn(4, g.n_nodes(), |r, i| (r + 3 * i) as f64);
    let mut out = z.clone();
    let mask = links.mask(RoundKey::inner(0, 0));
    c.bench_function("consensus_round", |b| {
        b.iter(|| consensus_round_into(black_box(&z), &mut out, &g, &mask, delta))
    });
    let mut t = 0u64;
    c.bench_function("sample_laplacian", |b| {
        b.iter(|| {
            t += 1;
            links.sample_laplacian(RoundKey::outer(t))
        })
    });
}

criterion_group!(benches, run_many, consensus);
criterion_main!(benches);
