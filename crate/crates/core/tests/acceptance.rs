//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line per criterion.
//!
//! Criteria 1, 2, 3 and 9 share one paired batch (40 scenarios for each of
//! 5, 8, 12 and 20 agents and each initialization mode, 500 CAO iterations),
//! which takes several minutes on a single core.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use covsim_core::cao::{cao_run, fit_surrogate, CaoParams, History, Measurement, RegressorBank};
use covsim_core::constraints::is_feasible;
use covsim_core::cvt::{cvt_energy, cvt_init, cvt_run, cvt_run_from, CvtParams, CvtState};
use covsim_core::experiment::{
    build_world, minimal_prior_study, run_batch, run_scenario, BatchOptions, BatchReport, BatchSpec, InitMode,
    PriorSpec, ScenarioSpec,
};
use covsim_core::io;
use covsim_core::surface::{DomainRect, HeightField};
use covsim_core::visibility::{CoverageEvaluator, SensorModel, SurfaceGrid, TeamConfiguration};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TEAM_SIZES: [usize; 4] = [5, 8, 12, 20];
const SCENARIOS: usize = 40;

fn report(criterion: &str, pass: bool, detail: &str) -> bool {
    // Written straight to the process stdout so the line survives test capture.
    let line = format!(
        "acceptance {criterion}: {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    pass
}

fn batch_spec() -> BatchSpec {
    toml::from_str(
        r#"
        team_sizes = [5, 8, 12, 20]
        scenarios = 40
        d_max = 25.0
        grid_resolution = 2.0

        [cao]
        max_iters = 500

        [seeds]
        terrain = 1000
        prior = 2000
        cvt = 3000
        cao = 4000
        "#,
    )
    .unwrap()
}

struct Paired {
    report: BatchReport,
    traces: PathBuf,
    _dir: tempfile::TempDir,
}

fn paired_batch() -> &'static Paired {
    static BATCH: OnceLock<Paired> = OnceLock::new();
    BATCH.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let specs = batch_spec().expand().unwrap();
        assert_eq!(specs.len(), SCENARIOS * TEAM_SIZES.len() * 3);
        let report = run_batch(
            &specs,
            &BatchOptions {
                parallelism: 0,
                out_dir: Some(dir.path().to_path_buf()),
                keep_traces: false,
            },
        )
        .unwrap();
        let failures = report.records.iter().filter(|r| r.outcome.is_err()).count();
        assert_eq!(failures, 0, "runs failed in the paired batch");
        print!("{}", report.summary.to_table());
        Paired {
            traces: dir.path().join("traces"),
            report,
            _dir: dir,
        }
    })
}

fn row(n: usize, mode: InitMode) -> (f64, f64) {
    let r = paired_batch()
        .report
        .summary
        .find(n, PriorSpec::Random { count: 30 }, mode)
        .unwrap();
    assert_eq!(r.scenarios, SCENARIOS);
    (r.initial_mean, r.max_mean)
}

#[test]
fn criterion_1_ordering() {
    let mut ok = true;
    let mut detail = Vec::new();
    for n in TEAM_SIZES {
        let (_, cvt) = row(n, InitMode::Cvt);
        let (_, random) = row(n, InitMode::Random);
        let (_, corner) = row(n, InitMode::Corner);
        let mut pass = cvt >= random && random >= corner;
        if n == 8 || n == 12 {
            pass &= cvt - random >= 0.02;
        }
        ok &= pass;
        detail.push(format!("N={n} cvt {cvt:.3} random {random:.3} corner {corner:.3}"));
    }
    assert!(report("1 ordering cvt >= random >= corner", ok, &detail.join("; ")));
}

#[test]
fn criterion_2_initial_gap() {
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [8, 12, 20] {
        let (cvt, _) = row(n, InitMode::Cvt);
        let (random, _) = row(n, InitMode::Random);
        ok &= cvt - random >= 0.10;
        detail.push(format!("N={n} gap {:.3}", cvt - random));
    }
    assert!(report("2 initial gap cvt - random >= 0.10", ok, &detail.join("; ")));
}

#[test]
fn criterion_3_bands() {
    // Soft: the reference terrain statistics are not fully specified, so a
    // miss is reported but does not fail the suite.
    let reference = [(5, 0.65), (8, 0.84), (12, 0.92), (20, 0.98)];
    let mut ok = true;
    let mut detail = Vec::new();
    for (n, want) in reference {
        let (_, got) = row(n, InitMode::Cvt);
        ok &= (got - want).abs() <= 0.10;
        detail.push(format!("N={n} {got:.3} vs {want:.2}"));
    }
    report("3 cvt max within 0.10 of reference (soft)", ok, &detail.join("; "));
}

#[test]
fn criterion_4_minimal_prior() {
    let specs: Vec<ScenarioSpec> = batch_spec()
        .expand()
        .unwrap()
        .into_iter()
        .filter(|s| s.n_agents == 12 && s.mode == InitMode::Cvt)
        .collect();
    assert_eq!(specs.len(), SCENARIOS);
    let rep = minimal_prior_study(&specs, &BatchOptions::default()).unwrap();
    let informed = rep.summary.find(12, PriorSpec::Random { count: 30 }, InitMode::Cvt).unwrap();
    let pyramid = rep.summary.find(12, PriorSpec::Pyramid, InitMode::Cvt).unwrap();
    assert_eq!(informed.scenarios + pyramid.scenarios, 2 * SCENARIOS);
    let gap = (informed.max_mean - pyramid.max_mean).abs();
    let ok = pyramid.initial_mean < informed.initial_mean && gap <= 0.04;
    assert!(report(
        "4 pyramid prior",
        ok,
        &format!(
            "initial {:.3} (sd {:.3}) vs {:.3}; max {:.3} (sd {:.3}) vs {:.3}; gap {gap:.3}",
            pyramid.initial_mean,
            pyramid.initial_std,
            informed.initial_mean,
            pyramid.max_mean,
            pyramid.max_std,
            informed.max_mean
        )
    ));
}

#[test]
fn criterion_5_flat_disk() {
    // Evaluated on a 0.5 m grid; tolerance is two cells of the default 2 m
    // grid (8 m^2), the lattice-counting error of a disk of this size.
    let domain = DomainRect::default();
    let field = HeightField::flat(domain, 0.0).unwrap();
    let grid = SurfaceGrid::new(&field, 0.5).unwrap();
    let tolerance = 2.0 * 2.0 * 2.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for (h, d_max) in [(5.0, 25.0), (10.0, 25.0), (2.0, 20.0), (15.0, 30.0), (20.0, 35.0)] {
        let eval = CoverageEvaluator::new(field.clone(), grid.clone(), SensorModel::new(d_max).unwrap());
        let team = TeamConfiguration::new(vec![Point3::new(50.0, 50.0, h)]);
        let got = eval.evaluate(&team).value * domain.area();
        let want = std::f64::consts::PI * (d_max * d_max - h * h);
        let err = (got - want).abs();
        ok &= err <= tolerance;
        detail.push(format!("h={h} d={d_max} err {err:.2} m^2"));
    }
    assert!(report("5 flat-terrain disk", ok, &detail.join("; ")));
}

/// Lloyd's method on a dense lattice of the square; best of several starts.
fn lloyd_oracle(n: usize, side: f64) -> Vec<[f64; 2]> {
    let m = 200;
    let pts: Vec<[f64; 2]> = (0..m * m)
        .map(|k| [((k % m) as f64 + 0.5) * side / m as f64, ((k / m) as f64 + 0.5) * side / m as f64])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut best = (f64::INFINITY, Vec::new());
    for _ in 0..8 {
        let mut g: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect();
        let mut energy = 0.0;
        for _ in 0..200 {
            let mut sum = vec![[0.0; 2]; n];
            let mut cnt = vec![0usize; n];
            energy = 0.0;
            for p in &pts {
                let (i, d2) = g
                    .iter()
                    .enumerate()
                    .map(|(i, q)| (i, (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)))
                    .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
                sum[i][0] += p[0];
                sum[i][1] += p[1];
                cnt[i] += 1;
                energy += d2;
            }
            for i in 0..n {
                if cnt[i] > 0 {
                    g[i] = [sum[i][0] / cnt[i] as f64, sum[i][1] / cnt[i] as f64];
                }
            }
        }
        if energy < best.0 {
            best = (energy, g);
        }
    }
    best.1
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn matched_distance(a: &[[f64; 2]], b: &[Point3<f64>]) -> f64 {
    permutations(a.len())
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| (a[i][0] - b[j].x).hypot(a[i][1] - b[j].y))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_6_cvt_oracle() {
    let side = 100.0;
    let field = HeightField::flat(DomainRect::square(side).unwrap(), 0.0).unwrap();
    let params = CvtParams::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [1, 4] {
        let oracle = lloyd_oracle(n, side);
        let mut worst: f64 = 0.0;
        for seed in 0..5 {
            let out = cvt_run(&field, n, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            worst = worst.max(matched_distance(&oracle, &out.team.positions));
        }
        ok &= worst <= 0.05 * side;
        detail.push(format!("N={n} worst offset {:.2}% of edge", 100.0 * worst / side));

        let mut decreased = 0;
        for seed in 0..40u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let init: CvtState = cvt_init(&field, n, &mut rng).unwrap();
            let e0 = cvt_energy(&init.generators, &field, 20_000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let p200 = CvtParams {
                max_iters: 200,
                tolerance: 0.0,
                ..params
            };
            let out = cvt_run_from(init, &field, &p200, &mut rng, |_| {}).unwrap();
            assert_eq!(out.state.iteration, 200);
            let e200 = cvt_energy(&out.state.generators, &field, 20_000, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            if e200 < e0 {
                decreased += 1;
            }
        }
        ok &= decreased as f64 >= 0.95 * 40.0;
        detail.push(format!("N={n} energy decreased in {decreased}/40"));
    }
    assert!(report("6 CVT matches Lloyd oracle", ok, &detail.join("; ")));
}

#[test]
fn criterion_7_cao_analytic() {
    let target = [50.0, 40.0, 20.0];
    let params = CaoParams {
        noise_std: 0.005,
        max_iters: 500,
        ..Default::default()
    }
    .resolve(1)
    .unwrap();
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Point3::new(
            target[0] + rng.random_range(-10.0..10.0),
            target[1] + rng.random_range(-10.0..10.0),
            target[2] + rng.random_range(-10.0..10.0),
        );
        let bank = RegressorBank::random(3, params.bank_size, seed).unwrap();
        let mut noise = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let mut objective = |t: &TeamConfiguration| -> covsim_core::Result<Measurement> {
            let p = t.positions[0];
            let j = -((p.x - target[0]).powi(2) + (p.y - target[1]).powi(2) + (p.z - target[2]).powi(2));
            let e: f64 = rng_normal(&mut noise) * 0.005;
            Ok(Measurement {
                noisy: j + e,
                truth: Some(j),
            })
        };
        let trace = cao_run(
            TeamConfiguration::new(vec![start]),
            &mut objective,
            &|_| true,
            &params,
            &bank,
            &mut ChaCha8Rng::seed_from_u64(500 + seed),
        )
        .unwrap();
        let last = trace.rows.last().unwrap().team.positions[0];
        let dist = ((last.x - target[0]).powi(2) + (last.y - target[1]).powi(2) + (last.z - target[2]).powi(2)).sqrt();
        if dist <= 1.0 {
            hits += 1;
        }
    }
    let converged = hits >= 18;

    // A cubic in three variables is in the span of the full cubic bank for
    // any affine normalization of the inputs.
    let bank = RegressorBank::random(3, 20, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let coef: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
    let poly = |x: &[f64]| {
        let mut terms = vec![1.0];
        terms.extend_from_slice(x);
        for a in 0..3 {
            for b in a..3 {
                terms.push(x[a] * x[b] * 0.1);
                for c in b..3 {
                    terms.push(x[a] * x[b] * x[c] * 0.01);
                }
            }
        }
        terms.iter().zip(&coef).map(|(t, c)| t * c).sum::<f64>()
    };
    let mut history = History::new(60);
    for _ in 0..40 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..10.0)).collect();
        history.push(x.clone(), poly(&x));
    }
    let fit = fit_surrogate(&history, &bank).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..10.0)).collect();
        worst = worst.max((fit.predict(&bank, &x) - poly(&x)).abs());
    }
    let exact = worst <= 1e-6;
    assert!(report(
        "7 CAO analytic convergence and exact recovery",
        converged && exact,
        &format!("{hits}/20 within 1 m; recovery error {worst:.2e}")
    ));
}

fn rng_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

#[test]
fn criterion_8_determinism() {
    let batch = paired_batch();
    let mut ok = true;
    let mut checked = 0;
    for rec in batch.report.records.iter().filter(|r| r.index % 97 == 0) {
        let run = run_scenario(&rec.spec).unwrap();
        let fresh = io::format_trace(&run.trace).unwrap();
        let stored = std::fs::read(batch.traces.join(format!("{}.csv", rec.hash))).unwrap();
        ok &= fresh == stored;
        checked += 1;
    }
    let mut spec = ScenarioSpec::new(4, InitMode::Cvt, batch_spec().seeds);
    spec.cao.max_iters = 60;
    let a = io::format_trace(&run_scenario(&spec).unwrap().trace).unwrap();
    let b = io::format_trace(&run_scenario(&spec).unwrap().trace).unwrap();
    ok &= a == b;
    assert!(report(
        "8 determinism",
        ok,
        &format!("{checked} batch traces regenerated byte-identically; repeated run identical: {}", a == b)
    ));
}

#[test]
fn criterion_9_feasibility() {
    let batch = paired_batch();
    let mut rows = 0usize;
    let mut bad = 0usize;
    for rec in &batch.report.records {
        let world = build_world(&rec.spec).unwrap();
        let trace = io::read_trace(&batch.traces.join(format!("{}.csv", rec.hash))).unwrap();
        assert_eq!(trace.len(), rec.spec.cao.max_iters + 1);
        for r in &trace {
            rows += 1;
            if !is_feasible(&r.team, &world.truth, &world.constraints) {
                bad += 1;
            }
        }
    }
    assert!(report(
        "9 every stored configuration feasible",
        bad == 0,
        &format!("{rows} configurations in {} traces, {bad} infeasible", batch.report.records.len())
    ));
}
