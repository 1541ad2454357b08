//! Scenario construction, single runs and paired batches.
//!
//! A scenario draws a truth terrain, samples a sparse prior from it, builds
//! the piecewise-linear estimate, initializes the team (corner, random or
//! CVT) and runs CAO against noisy coverage of the truth. Coverage reported
//! in results is always the noise-free value.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cao::{cao_run, CaoParams, Measurement, RegressorBank, RunTrace};
use crate::constraints::{is_feasible, repair, ConstraintParams, ConstraintSpec};
use crate::cvt::{cvt_run, CvtParams};
use crate::error::{Error, Result};
use crate::io;
use crate::surface::{
    build_piecewise_linear, generate_terrain, pyramid_samples, sample_surface_uniform, DomainRect,
    GaussianMixtureSpec, HeightField, SamplePointSet, TerrainParams,
};
use crate::visibility::{noisy_value, CoverageEvaluator, SensorModel, SurfaceGrid, TeamConfiguration};

/// Where the truth terrain comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerrainSource {
    /// Random Gaussian mixture drawn from the terrain seed.
    GaussianMixture(TerrainParams),
    /// Height grid file (see [`crate::io`]); its extent replaces `domain`.
    Grid { path: PathBuf },
    Flat { z: f64 },
}

impl Default for TerrainSource {
    fn default() -> Self {
        TerrainSource::GaussianMixture(TerrainParams::default())
    }
}

/// Prior knowledge of the terrain used to build the surface estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorSpec {
    /// `count` points drawn uniformly over the domain.
    Random { count: usize },
    /// The four domain corners and the center.
    Pyramid,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Random { count: 30 }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Random { count } => write!(f, "random-{count}"),
            PriorSpec::Pyramid => write!(f, "pyramid"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Packed on a `corner_spacing` lattice in the minimum corner of the domain.
    Corner,
    /// Uniform over the domain.
    Random,
    /// Stochastic CVT on the surface estimate.
    Cvt,
}

impl InitMode {
    pub const ALL: [InitMode; 3] = [InitMode::Corner, InitMode::Random, InitMode::Cvt];
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Corner => "corner",
            InitMode::Random => "random",
            InitMode::Cvt => "cvt",
        })
    }
}

/// Independent seeds for each random stream of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub terrain: u64,
    pub prior: u64,
    pub cvt: u64,
    pub cao: u64,
}

impl Seeds {
    /// Seeds of the `i`-th scenario of a batch based at `self`.
    pub fn offset(&self, i: u64) -> Self {
        Self {
            terrain: self.terrain.wrapping_add(i),
            prior: self.prior.wrapping_add(i),
            cvt: self.cvt.wrapping_add(i),
            cao: self.cao.wrapping_add(i),
        }
    }
}

/// Default altitude above the terrain at which teams are released.
pub const DEFAULT_INIT_ALTITUDE: f64 = 5.0;

fn default_d_max() -> f64 {
    25.0
}

fn default_grid_resolution() -> f64 {
    2.0
}

fn default_init_altitude() -> f64 {
    DEFAULT_INIT_ALTITUDE
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub domain: DomainRect,
    #[serde(default)]
    pub terrain: TerrainSource,
    pub n_agents: usize,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default)]
    pub prior: PriorSpec,
    pub mode: InitMode,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: f64,
    /// Release altitude above the terrain for every initialization mode.
    #[serde(default = "default_init_altitude")]
    pub init_altitude: f64,
    /// Lattice pitch of the corner start; `None` means `2 * d_sep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_spacing: Option<f64>,
    #[serde(default)]
    pub constraints: ConstraintParams,
    #[serde(default)]
    pub cvt: CvtParams,
    #[serde(default)]
    pub cao: CaoParams,
    pub seeds: Seeds,
}

impl ScenarioSpec {
    /// Defaults with the given size, mode and seeds.
    pub fn new(n_agents: usize, mode: InitMode, seeds: Seeds) -> Self {
        Self {
            domain: DomainRect::default(),
            terrain: TerrainSource::default(),
            n_agents,
            d_max: default_d_max(),
            prior: PriorSpec::default(),
            mode,
            grid_resolution: default_grid_resolution(),
            init_altitude: DEFAULT_INIT_ALTITUDE,
            corner_spacing: None,
            constraints: ConstraintParams::default(),
            cvt: CvtParams::default(),
            cao: CaoParams::default(),
            seeds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::param("n_agents", "must be at least 1"));
        }
        self.domain.validate()?;
        SensorModel::new(self.d_max)?;
        if !(self.grid_resolution > 0.0 && self.grid_resolution.is_finite()) {
            return Err(Error::param("grid_resolution", "must be positive"));
        }
        if let PriorSpec::Random { count } = self.prior {
            if count < 3 {
                return Err(Error::param("prior.count", "needs at least 3 samples"));
            }
        }
        match &self.terrain {
            TerrainSource::GaussianMixture(p) => p.validate()?,
            TerrainSource::Flat { z } if !z.is_finite() => {
                return Err(Error::param("terrain.z", "must be finite"))
            }
            _ => {}
        }
        let c = &self.constraints;
        ConstraintSpec::new(*c, self.domain)?;
        if !(self.init_altitude >= c.h_min && self.init_altitude <= c.h_max) {
            return Err(Error::param(
                "init_altitude",
                "must lie within [constraints.h_min, constraints.h_max]",
            ));
        }
        if let Some(pitch) = self.corner_spacing {
            if !(pitch >= c.d_sep && pitch.is_finite()) {
                return Err(Error::param("corner_spacing", "must be >= constraints.d_sep"));
            }
        }
        self.cvt.validate()?;
        self.cao.resolve(self.n_agents)?;
        Ok(())
    }

    pub fn corner_pitch(&self) -> f64 {
        self.corner_spacing.unwrap_or(2.0 * self.constraints.d_sep)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(canonical_form(self).as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical_form(spec: &ScenarioSpec) -> String {
    // Field order is fixed by the struct layout, so the TOML text is stable.
    toml::to_string(spec).unwrap_or_else(|_| format!("{spec:?}"))
}

/// Terrains and evaluator shared by all modes of one scenario.
#[derive(Debug, Clone)]
pub struct World {
    pub truth: HeightField,
    pub prior: SamplePointSet,
    pub approx: HeightField,
    pub evaluator: CoverageEvaluator,
    pub constraints: ConstraintSpec,
}

/// Builds the truth terrain, draws the prior and triangulates the estimate.
pub fn build_world(spec: &ScenarioSpec) -> Result<World> {
    spec.validate()?;
    let truth = match &spec.terrain {
        TerrainSource::GaussianMixture(p) => {
            generate_terrain(&GaussianMixtureSpec::random(spec.domain, p, spec.seeds.terrain)?)?
        }
        TerrainSource::Grid { path } => io::read_grid(path)?,
        TerrainSource::Flat { z } => HeightField::flat(spec.domain, *z)?,
    };
    let domain = *truth.domain();
    let prior = match spec.prior {
        PriorSpec::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds.prior);
            sample_surface_uniform(&truth, count, &mut rng)
        }
        PriorSpec::Pyramid => pyramid_samples(&truth),
    };
    let approx = build_piecewise_linear(&prior, &domain)?;
    let grid = SurfaceGrid::new(&truth, spec.grid_resolution)?;
    let evaluator = CoverageEvaluator::new(truth.clone(), grid, SensorModel::new(spec.d_max)?);
    let constraints = ConstraintSpec::new(spec.constraints, domain)?;
    Ok(World {
        truth,
        prior,
        approx,
        evaluator,
        constraints,
    })
}

/// Initial team for `spec.mode`, repaired against the truth terrain.
pub fn make_initialization(spec: &ScenarioSpec, world: &World) -> Result<TeamConfiguration> {
    let n = spec.n_agents;
    let truth = &world.truth;
    let d = *truth.domain();
    let lift = spec.init_altitude;
    let positions: Vec<Point3<f64>> = match spec.mode {
        InitMode::Corner => {
            let cols = (n as f64).sqrt().ceil() as usize;
            let step = spec.corner_pitch();
            (0..n)
                .map(|i| {
                    let (x, y) = d.clamp(d.x_min + (i % cols) as f64 * step, d.y_min + (i / cols) as f64 * step);
                    Point3::new(x, y, truth.eval(x, y) + lift)
                })
                .collect()
        }
        InitMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds.cvt);
            (0..n)
                .map(|_| {
                    let (x, y) = d.sample_uniform(&mut rng);
                    Point3::new(x, y, truth.eval(x, y) + lift)
                })
                .collect()
        }
        InitMode::Cvt => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds.cvt);
            let out = cvt_run(&world.approx, n, &spec.cvt, &mut rng)?;
            // Generators sit on the estimate; the estimate can be below the
            // truth, which repair corrects.
            out.team
                .positions
                .iter()
                .map(|p| Point3::new(p.x, p.y, p.z + lift))
                .collect()
        }
    };
    repair(&TeamConfiguration::new(positions), truth, &world.constraints)
}

/// Summary numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub initial_coverage: f64,
    pub max_coverage: f64,
    /// First iteration whose coverage is within 0.01 of `max_coverage`.
    pub converged_iteration: usize,
    pub wall_time_s: f64,
}

/// A finished run with its full trace.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub result: RunResult,
    pub initial: TeamConfiguration,
    pub trace: RunTrace,
}

const STREAM_BANK: u64 = 0;
const STREAM_CANDIDATES: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn cao_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioRun> {
    let world = build_world(spec)?;
    run_in_world(spec, &world)
}

/// Runs CAO for `spec` in an already built world.
pub fn run_in_world(spec: &ScenarioSpec, world: &World) -> Result<ScenarioRun> {
    let start = Instant::now();
    let initial = make_initialization(spec, world)?;
    let params = spec.cao.resolve(spec.n_agents)?;
    let bank = RegressorBank::random(params.dim, params.bank_size, cao_rng(spec.seeds.cao, STREAM_BANK).next_seed())?;
    let mut noise = cao_rng(spec.seeds.cao, STREAM_NOISE);
    let noise_std = spec.cao.noise_std;
    let evaluator = &world.evaluator;
    let mut objective = |team: &TeamConfiguration| -> Result<Measurement> {
        let truth = evaluator.evaluate(team).value;
        Ok(Measurement {
            noisy: noisy_value(truth, noise_std, &mut noise)?,
            truth: Some(truth),
        })
    };
    let feasible = |team: &TeamConfiguration| is_feasible(team, &world.truth, &world.constraints);
    let mut rng = cao_rng(spec.seeds.cao, STREAM_CANDIDATES);
    let trace = cao_run(initial.clone(), &mut objective, &feasible, &params, &bank, &mut rng)?;
    let result = summarize(&trace, start.elapsed().as_secs_f64());
    Ok(ScenarioRun {
        result,
        initial,
        trace,
    })
}

trait NextSeed {
    fn next_seed(self) -> u64;
}

impl NextSeed for ChaCha8Rng {
    fn next_seed(mut self) -> u64 {
        rand::Rng::random(&mut self)
    }
}

fn summarize(trace: &RunTrace, wall_time_s: f64) -> RunResult {
    let values: Vec<f64> = trace.rows.iter().map(|r| r.coverage.unwrap_or(r.noisy)).collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    RunResult {
        initial_coverage: values[0],
        max_coverage: max,
        converged_iteration: values.iter().position(|&v| v >= max - 0.01).unwrap_or(0),
        wall_time_s,
    }
}

/// Outcome of one scenario in a batch.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub index: usize,
    pub spec: ScenarioSpec,
    pub hash: String,
    pub outcome: std::result::Result<RunResult, String>,
    /// Present when the batch was asked to keep traces in memory.
    pub trace: Option<RunTrace>,
}

/// Mean and sample standard deviation for one (team size, prior, mode) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub n_agents: usize,
    pub prior: PriorSpec,
    pub mode: InitMode,
    pub scenarios: usize,
    pub failures: usize,
    pub initial_mean: f64,
    pub initial_std: f64,
    pub max_mean: f64,
    pub max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchSummary {
    pub rows: Vec<SummaryRow>,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl BatchSummary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut groups: BTreeMap<(usize, PriorSpec, InitMode), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
        for r in records {
            let g = groups
                .entry((r.spec.n_agents, r.spec.prior, r.spec.mode))
                .or_default();
            match &r.outcome {
                Ok(res) => {
                    g.0.push(res.initial_coverage);
                    g.1.push(res.max_coverage);
                }
                Err(_) => g.2 += 1,
            }
        }
        let rows = groups
            .into_iter()
            .map(|((n_agents, prior, mode), (init, max, failures))| {
                let (initial_mean, initial_std) = mean_std(&init);
                let (max_mean, max_std) = mean_std(&max);
                SummaryRow {
                    n_agents,
                    prior,
                    mode,
                    scenarios: init.len(),
                    failures,
                    initial_mean,
                    initial_std,
                    max_mean,
                    max_std,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn find(&self, n_agents: usize, prior: PriorSpec, mode: InitMode) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.n_agents == n_agents && r.prior == prior && r.mode == mode)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "n_agents",
            "prior",
            "mode",
            "scenarios",
            "failures",
            "initial_mean",
            "initial_std",
            "max_mean",
            "max_std",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.n_agents.to_string(),
                r.prior.to_string(),
                r.mode.to_string(),
                r.scenarios.to_string(),
                r.failures.to_string(),
                r.initial_mean.to_string(),
                r.initial_std.to_string(),
                r.max_mean.to_string(),
                r.max_std.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    /// Fixed-width table with one line per team size and prior, and
    /// initial/max mean (std) per mode.
    pub fn to_table(&self) -> String {
        let mut keys: Vec<(usize, PriorSpec)> = self.rows.iter().map(|r| (r.n_agents, r.prior)).collect();
        keys.dedup();
        let modes: Vec<InitMode> = InitMode::ALL
            .into_iter()
            .filter(|m| self.rows.iter().any(|r| r.mode == *m))
            .collect();
        let mut out = format!("{:>4} {:>10}", "N", "prior");
        for m in &modes {
            out.push_str(&format!(" | {:^29}", m.to_string()));
        }
        out.push('\n');
        out.push_str(&format!("{:>4} {:>10}", "", ""));
        for _ in &modes {
            out.push_str(&format!(" | {:>14} {:>14}", "initial", "max"));
        }
        out.push('\n');
        for (n, prior) in keys {
            out.push_str(&format!("{n:>4} {:>10}", prior.to_string()));
            for m in &modes {
                match self.find(n, prior, *m) {
                    Some(r) if r.scenarios > 0 => out.push_str(&format!(
                        " | {:>5.3} ({:>5.3}) {:>5.3} ({:>5.3})",
                        r.initial_mean, r.initial_std, r.max_mean, r.max_std
                    )),
                    _ => out.push_str(&format!(" | {:>29}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A batch configuration: the cross product of team sizes, modes and
/// scenario indices over shared settings. Scenario `i` uses `seeds + i` for
/// every mode and team size, which pairs the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    #[serde(default)]
    pub domain: DomainRect,
    #[serde(default)]
    pub terrain: TerrainSource,
    pub team_sizes: Vec<usize>,
    #[serde(default = "default_modes")]
    pub modes: Vec<InitMode>,
    pub scenarios: usize,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default = "default_grid_resolution")]
    pub grid_resolution: f64,
    #[serde(default = "default_init_altitude")]
    pub init_altitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_spacing: Option<f64>,
    #[serde(default)]
    pub constraints: ConstraintParams,
    #[serde(default)]
    pub cvt: CvtParams,
    #[serde(default)]
    pub cao: CaoParams,
    pub seeds: Seeds,
}

fn default_modes() -> Vec<InitMode> {
    InitMode::ALL.to_vec()
}

impl BatchSpec {
    /// Scenario list ordered by scenario index, then team size, then mode.
    pub fn expand(&self) -> Result<Vec<ScenarioSpec>> {
        if self.team_sizes.is_empty() || self.modes.is_empty() || self.scenarios == 0 {
            return Err(Error::param(
                "batch",
                "team_sizes, modes and scenarios must all be non-empty",
            ));
        }
        let mut out = Vec::new();
        for i in 0..self.scenarios {
            for &n in &self.team_sizes {
                for &mode in &self.modes {
                    let spec = ScenarioSpec {
                        domain: self.domain,
                        terrain: self.terrain.clone(),
                        n_agents: n,
                        d_max: self.d_max,
                        prior: self.prior,
                        mode,
                        grid_resolution: self.grid_resolution,
                        init_altitude: self.init_altitude,
                        corner_spacing: self.corner_spacing,
                        constraints: self.constraints,
                        cvt: self.cvt,
                        cao: self.cao,
                        seeds: self.seeds.offset(i as u64),
                    };
                    spec.validate()?;
                    out.push(spec);
                }
            }
        }
        Ok(out)
    }
}

/// Options for [`run_batch`].
#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Worker threads; 0 uses all available cores.
    pub parallelism: usize,
    /// Directory for `summary.csv`, `runs.csv` and `traces/<hash>.csv`.
    pub out_dir: Option<PathBuf>,
    /// Keep every trace in the returned records.
    pub keep_traces: bool,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// Runs every scenario on a worker pool. Failures are recorded per run and
/// do not stop the batch. Output files depend only on the specs.
pub fn run_batch(specs: &[ScenarioSpec], options: &BatchOptions) -> Result<BatchReport> {
    let traces_dir = match &options.out_dir {
        Some(dir) => {
            let t = dir.join("traces");
            std::fs::create_dir_all(&t)?;
            Some(t)
        }
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(index, spec)| {
                let hash = spec.hash();
                let run = run_scenario(spec).and_then(|run| {
                    if let Some(dir) = &traces_dir {
                        let bytes = io::format_trace(&run.trace)?;
                        io::write_atomic(&dir.join(format!("{hash}.csv")), &bytes)?;
                    }
                    Ok(run)
                });
                let (outcome, trace) = match run {
                    Ok(run) => (Ok(run.result), options.keep_traces.then_some(run.trace)),
                    Err(e) => (Err(e.to_string()), None),
                };
                RunRecord {
                    index,
                    spec: spec.clone(),
                    hash,
                    outcome,
                    trace,
                }
            })
            .collect()
    });
    let summary = BatchSummary::from_records(&records);
    if let Some(dir) = &options.out_dir {
        io::write_atomic(&dir.join("summary.csv"), &summary.to_csv()?)?;
        io::write_atomic(&dir.join("runs.csv"), &runs_csv(&records)?)?;
    }
    Ok(BatchReport { records, summary })
}

/// Per-run CSV (no timing columns, so it is reproducible byte for byte).
pub fn runs_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "hash",
        "n_agents",
        "prior",
        "mode",
        "seed_terrain",
        "seed_prior",
        "seed_cvt",
        "seed_cao",
        "initial_coverage",
        "max_coverage",
        "converged_iteration",
        "error",
    ])?;
    for r in records {
        let s = &r.spec;
        let (init, max, conv, err) = match &r.outcome {
            Ok(res) => (
                res.initial_coverage.to_string(),
                res.max_coverage.to_string(),
                res.converged_iteration.to_string(),
                String::new(),
            ),
            Err(e) => (String::new(), String::new(), String::new(), e.clone()),
        };
        w.write_record([
            r.index.to_string(),
            r.hash.clone(),
            s.n_agents.to_string(),
            s.prior.to_string(),
            s.mode.to_string(),
            s.seeds.terrain.to_string(),
            s.seeds.prior.to_string(),
            s.seeds.cvt.to_string(),
            s.seeds.cao.to_string(),
            init,
            max,
            conv,
            err,
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs `specs` twice in CVT mode, once with their own prior and once with
/// the five-point pyramid prior. Seeds are shared between the two arms.
pub fn minimal_prior_study(specs: &[ScenarioSpec], options: &BatchOptions) -> Result<BatchReport> {
    let mut all = Vec::with_capacity(2 * specs.len());
    for s in specs {
        let informed = ScenarioSpec {
            mode: InitMode::Cvt,
            ..s.clone()
        };
        let pyramid = ScenarioSpec {
            prior: PriorSpec::Pyramid,
            ..informed.clone()
        };
        all.push(informed);
        all.push(pyramid);
    }
    run_batch(&all, options)
}

/// Recomputes noise-free coverage and feasibility for every row of a trace.
pub fn replay(world: &World, rows: &[io::TraceRecord]) -> Vec<(usize, f64, bool)> {
    rows.iter()
        .map(|r| {
            (
                r.iter,
                world.evaluator.evaluate(&r.team).value,
                is_feasible(&r.team, &world.truth, &world.constraints),
            )
        })
        .collect()
}

/// Resolves a relative grid path against `base`.
pub fn resolve_paths(terrain: &mut TerrainSource, base: &Path) {
    if let TerrainSource::Grid { path } = terrain {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}
