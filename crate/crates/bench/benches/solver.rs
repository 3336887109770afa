use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hybridflow_bench::{activsg_ring, load};
use hybridflow_core::coordinator::{sequential_solve, SolveOptions};
use hybridflow_core::fdpf::{build_bdoubleprime, build_bprime, AreaModel};
use hybridflow_core::grid::{build_admittance, build_graph};
use hybridflow_core::partition::partition_by_dc;
use hybridflow_core::sparse::{numeric_factorize, order, symbolic_factorize};

fn matrices(c: &mut Criterion) {
    let g = build_graph(&activsg_ring(12)).unwrap();
    let p = partition_by_dc(&g).unwrap();
    let all: Vec<usize> = (0..g.bus_count()).collect();
    c.bench_function("admittance x12", |b| b.iter(|| build_admittance(&g, &all)));

    let model = AreaModel::new(&g, &p.areas[0], &p.area_slacks[..1]).unwrap();
    c.bench_function("bprime and bdoubleprime", |b| {
        b.iter(|| (build_bprime(&g, &model), build_bdoubleprime(&g, &model)))
    });

    let bp = build_bprime(&g, &model);
    let perm = order(&bp);
    c.bench_function("minimum degree order", |b| b.iter(|| order(&bp)));
    let plan = Arc::new(symbolic_factorize(&bp, &perm).unwrap());
    c.bench_function("numeric factorize", |b| {
        b.iter(|| numeric_factorize(&plan, &bp).unwrap())
    });
    let f = numeric_factorize(&plan, &bp).unwrap();
    let rhs = vec![1.0; bp.dim()];
    c.bench_function("triangular solve", |b| b.iter(|| f.solve(&rhs)));
}

fn solves(c: &mut Criterion) {
    let ieee = load("ieee300_dc.m");
    c.bench_function("solve ieee300_dc", |b| {
        b.iter(|| {
            sequential_solve(
                &ieee,
                &SolveOptions {
                    threads: 1,
                    ..Default::default()
                },
            )
            .unwrap()
        })
    });

    let ring = activsg_ring(12);
    let mut group = c.benchmark_group("solve ACTIVSg500 x12");
    group.sample_size(10);
    for t in [1, 2, 4, 8] {
        group.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| {
                sequential_solve(
                    &ring,
                    &SolveOptions {
                        threads: t,
                        ..Default::default()
                    },
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, matrices, solves);
criterion_main!(benches);
