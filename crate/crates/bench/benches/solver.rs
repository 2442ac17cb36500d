use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use glpath::solver::{continuation_solve, default_ladder, Solution};
use glpath::{LadderPlan, ModelParams, SchemeKind, SeedKind, SolverConfig, SpaceTimeGrid, Stage};

fn stage(m: usize, n: usize, delta: f64, k: f64) -> Stage {
    Stage {
        grid: SpaceTimeGrid::new(m, n, 1.0).unwrap(),
        params: ModelParams::new(delta, k).unwrap(),
    }
}

fn solved(m: usize, n: usize, kind: SchemeKind) -> Solution {
    let ladder = default_ladder(stage(m, n, 0.03, 1e9), &LadderPlan::default()).unwrap();
    continuation_solve(SeedKind::TwoWall, kind, &SolverConfig::new(ladder)).unwrap()
}

fn kernels(c: &mut Criterion) {
    for (m, n) in [(30, 200), (100, 200)] {
        for kind in [SchemeKind::Forward, SchemeKind::Backward] {
            let sol = solved(m, n, kind);
            let (pr, path) = (&sol.problem, &sol.path);
            let tag = format!("{}_M{m}_N{n}", kind.tag());
            c.bench_function(&format!("residual/{tag}"), |b| {
                b.iter(|| pr.residual(black_box(path), kind).unwrap())
            });
            c.bench_function(&format!("jacobian/{tag}"), |b| {
                b.iter(|| pr.jacobian(black_box(path), kind).unwrap())
            });
            let jac = pr.jacobian(path, kind).unwrap();
            c.bench_function(&format!("banded_lu/{tag}"), |b| {
                b.iter_batched(|| jac.clone(), |j| j.factor().unwrap(), BatchSize::LargeInput)
            });
            c.bench_function(&format!("newton_iteration/{tag}"), |b| {
                b.iter(|| {
                    let r = pr.residual(path, kind).unwrap();
                    let lu = pr.jacobian(path, kind).unwrap().factor().unwrap();
                    lu.solve(&r)
                })
            });
            if kind == SchemeKind::Forward {
                let controls: Vec<_> = path.eta[1..].iter().map(|e| e.scaled(-1.0)).collect();
                c.bench_function(&format!("adjoint_gradient/{tag}"), |b| {
                    b.iter(|| pr.adjoint_gradient(black_box(&controls)).unwrap())
                });
            }
        }
    }
}

fn full_solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("continuation");
    g.sample_size(10);
    let ladder = default_ladder(stage(30, 200, 0.03, 1e9), &LadderPlan::default()).unwrap();
    let cfg = SolverConfig::new(ladder);
    for kind in [SchemeKind::Forward, SchemeKind::Backward] {
        g.bench_function(format!("two_wall_{}_M30_N200", kind.tag()), |b| {
            b.iter(|| continuation_solve(SeedKind::TwoWall, kind, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, full_solve);
criterion_main!(benches);
