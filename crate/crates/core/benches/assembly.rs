//! Sequential vs rayon paths for the data-parallel kernels.
//!
//! Build with `--no-default-features` to check the fallback: `Parallel`
//! then runs sequentially and both rows should match.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use circle_response::diagnostics::mixing_rate_with;
use circle_response::oracle::{monte_carlo_stationary_with, ulam_matrix_with};
use circle_response::par::Exec;
use circle_response::response::{Discretization, ResponseSolver};
use circle_response::transfer::build_transfer_with;
use circle_response::{DiffeoFamily, MapFamily, NoiseKernel, Norm, TrigMap, TrigPoly};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn arnold() -> MapFamily {
    MapFamily::new(
        TrigMap::arnold(0.3, 0.8),
        DiffeoFamily::first_order(TrigPoly::constant(1.0), 0.05).unwrap(),
        Some(NoiseKernel::new(0.1).unwrap()),
    )
}

fn assembly(c: &mut Criterion) {
    let fam = arnold();
    let mut g = c.benchmark_group("assembly");
    for n in [32usize, 64] {
        for (name, exec) in POLICIES {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| build_transfer_with(exec, &fam, 0.01, n, 8 * n).unwrap())
            });
        }
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let solver = ResponseSolver::new(arnold(), Discretization::new(48, 384)).unwrap();
    let deltas = [1e-2, 5e-3, 2.5e-3, 1.25e-3, -1.25e-3, -2.5e-3, -5e-3, -1e-2];
    let mut g = c.benchmark_group("stationary_sweep");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| solver.stationary_sweep_with(exec, black_box(&deltas)).unwrap()));
    }
    g.finish();
}

fn mixing(c: &mut Criterion) {
    let solver = ResponseSolver::new(arnold(), Discretization::new(48, 384)).unwrap();
    let mut g = c.benchmark_group("mixing");
    g.sample_size(20);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| {
            b.iter(|| mixing_rate_with(exec, solver.l0(), 20, Norm::Ck(1), Norm::Ck(0)).unwrap())
        });
    }
    g.finish();
}

fn oracles(c: &mut Criterion) {
    let fam = arnold();
    let mut g = c.benchmark_group("oracles");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::new("ulam_4096", name), |b| {
            b.iter(|| ulam_matrix_with(exec, &fam, 0.0, 4096).unwrap())
        });
        g.bench_function(BenchmarkId::new("monte_carlo_1e5", name), |b| {
            b.iter(|| monte_carlo_stationary_with(exec, &fam, 0.0, 100_000, 1000, 42).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, sweep, mixing, oracles);
criterion_main!(benches);
