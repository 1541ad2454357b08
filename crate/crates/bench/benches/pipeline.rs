use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use covsim_core::cao::{fit_surrogate, CaoParams, History, RegressorBank};
use covsim_core::cvt::{cvt_init, cvt_step, CvtParams};
use covsim_core::surface::{
    build_piecewise_linear, generate_terrain, sample_surface_uniform, DomainRect, GaussianMixtureSpec, HeightField,
    TerrainParams,
};
use covsim_core::visibility::{CoverageEvaluator, SensorModel, SurfaceGrid, TeamConfiguration};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn terrain() -> HeightField {
    let spec = GaussianMixtureSpec::random(DomainRect::default(), &TerrainParams::default(), 7).unwrap();
    generate_terrain(&spec).unwrap()
}

fn team(field: &HeightField, n: usize, rng: &mut ChaCha8Rng) -> TeamConfiguration {
    TeamConfiguration::new(
        (0..n)
            .map(|_| {
                let (x, y) = (rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0);
                Point3::new(x, y, field.eval(x, y) + 5.0)
            })
            .collect(),
    )
}

fn coverage(c: &mut Criterion) {
    let field = terrain();
    let grid = SurfaceGrid::new(&field, 2.0).unwrap();
    let eval = CoverageEvaluator::new(field.clone(), grid, SensorModel::new(25.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("coverage");
    for n in [5, 12, 20] {
        let t = team(&field, n, &mut rng);
        group.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| {
            b.iter(|| black_box(eval.evaluate(t).value))
        });
    }
    group.finish();
}

fn cvt(c: &mut Criterion) {
    let field = terrain();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prior = sample_surface_uniform(&field, 30, &mut rng);
    let approx = build_piecewise_linear(&prior, field.domain()).unwrap();
    let params = CvtParams::default();
    let mut group = c.benchmark_group("cvt_step");
    for n in [5, 12, 20] {
        let mut state = cvt_init(&approx, n, &mut rng).unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| black_box(cvt_step(&mut state, &approx, &params, &mut rng)))
        });
    }
    group.finish();
}

fn surrogate(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("fit_surrogate");
    group.sample_size(20);
    for n in [5, 12, 20] {
        let p = CaoParams::default().resolve(n).unwrap();
        let bank = RegressorBank::random(p.dim, p.bank_size, 0).unwrap();
        let mut history = History::new(p.window());
        for _ in 0..p.window() {
            let x: Vec<f64> = (0..p.dim).map(|_| rng.random::<f64>() * 100.0).collect();
            history.push(x, rng.random());
        }
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| black_box(fit_surrogate(&history, &bank).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, coverage, cvt, surrogate);
criterion_main!(benches);
