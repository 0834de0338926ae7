//! Sequential versus rayon execution of the data-parallel hot loops.

use beamtwin::channel::Twin;
use beamtwin::exec::Exec;
use beamtwin::harness::eval_placements;
use beamtwin::localizer::gen_dataset;
use beamtwin::optimizer::{ga_optimize, grid_optimize, OptimizerConfig, OptimizerKind};
use beamtwin::scene::Scene;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dataset(c: &mut Criterion) {
    let scene = Scene::reference();
    let mut g = c.benchmark_group("gen_dataset_200x63");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gen_dataset(black_box(&scene), 200, 63, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn grid(c: &mut Criterion) {
    let scene = Scene::reference();
    let twin = Twin::new(scene.clone()).unwrap();
    let placement = eval_placements(&scene, 0, 1).remove(0);
    let budget = twin.budget_at(&placement).unwrap();
    let cfg = OptimizerConfig { grid_step: 2f64.to_radians(), ..OptimizerConfig::new(OptimizerKind::Grid) };
    let mut g = c.benchmark_group("grid_search_2deg");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid_optimize(|a| budget.sinr_db(a), &cfg, exec).unwrap().best_db)
        });
    }
    g.finish();
}

fn ga(c: &mut Criterion) {
    let scene = Scene::reference();
    let twin = Twin::new(scene.clone()).unwrap();
    let placement = eval_placements(&scene, 0, 1).remove(0);
    let budget = twin.budget_at(&placement).unwrap();
    let cfg = OptimizerConfig::new(OptimizerKind::Ga);
    let mut g = c.benchmark_group("ga_40x60");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ga_optimize(|a| budget.sinr_db(a), &cfg, exec).unwrap().best_db)
        });
    }
    g.finish();
}

criterion_group!(benches, dataset, grid, ga);
criterion_main!(benches);
