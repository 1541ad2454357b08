use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use covsim_core::constraints::is_feasible;
use covsim_core::cvt::{cvt_init, cvt_run_from};
use covsim_core::experiment::{
    build_world, minimal_prior_study, replay, resolve_paths, run_batch, run_in_world, BatchOptions, BatchSpec,
    ScenarioSpec, Seeds,
};
use covsim_core::io;
use covsim_core::visibility::TeamConfiguration;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Multi-UAV visual coverage simulator: CVT initialization followed by CAO.
#[derive(Parser, Debug)]
#[command(name = "covsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario; writes trace.csv, visible_mask.csv and summary.json.
    Run(Common),
    /// Run a batch of paired scenarios; writes summary.csv, runs.csv and traces/.
    Batch {
        #[command(flatten)]
        common: Common,
        /// Compare the configured prior with the five-point pyramid prior (CVT mode only).
        #[arg(long)]
        minimal_prior: bool,
    },
    /// Run only the CVT initialization; writes cvt_trace.csv, generators.xyz and initial.xyz.
    CvtOnly(Common),
    /// Coverage of the positions in an `x y z` file over the scenario's truth terrain.
    CoverageEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        positions: PathBuf,
    },
    /// Recompute coverage and feasibility for every row of a trace.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario (or batch) TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for batches; 1 runs serially.
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    #[arg(long)]
    seed_terrain: Option<u64>,
    #[arg(long)]
    seed_prior: Option<u64>,
    #[arg(long)]
    seed_cvt: Option<u64>,
    #[arg(long)]
    seed_cao: Option<u64>,
    /// Coverage grid resolution in meters.
    #[arg(long)]
    grid_res: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn apply_seeds(&self, seeds: &mut Seeds) {
        if let Some(s) = self.seed_terrain {
            seeds.terrain = s;
        }
        if let Some(s) = self.seed_prior {
            seeds.prior = s;
        }
        if let Some(s) = self.seed_cvt {
            seeds.cvt = s;
        }
        if let Some(s) = self.seed_cao {
            seeds.cao = s;
        }
    }

    fn config_dir(&self) -> PathBuf {
        self.config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    fn scenario(&self) -> Result<ScenarioSpec> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut spec: ScenarioSpec =
            toml::from_str(&text).with_context(|| format!("invalid config {}", self.config.display()))?;
        self.apply_seeds(&mut spec.seeds);
        if let Some(r) = self.grid_res {
            spec.grid_resolution = r;
        }
        resolve_paths(&mut spec.terrain, &self.config_dir());
        spec.validate()?;
        Ok(spec)
    }

    fn batch(&self) -> Result<BatchSpec> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut spec: BatchSpec =
            toml::from_str(&text).with_context(|| format!("invalid config {}", self.config.display()))?;
        self.apply_seeds(&mut spec.seeds);
        if let Some(r) = self.grid_res {
            spec.grid_resolution = r;
        }
        resolve_paths(&mut spec.terrain, &self.config_dir());
        Ok(spec)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    hash: String,
    n_agents: usize,
    mode: String,
    prior: String,
    seeds: Seeds,
    initial_coverage: f64,
    max_coverage: f64,
    converged_iteration: usize,
    best_iteration: usize,
    iterations: usize,
    wall_time_s: f64,
    best_positions: Vec<[f64; 3]>,
}

fn cmd_run(c: &Common) -> Result<()> {
    let spec = c.scenario()?;
    let out = c.out_dir()?;
    let world = build_world(&spec)?;
    let run = run_in_world(&spec, &world)?;
    io::write_atomic(&out.join("trace.csv"), &io::format_trace(&run.trace)?)?;
    let best = &run.trace.best;
    let mask = world.evaluator.evaluate(&best.team);
    io::write_atomic(
        &out.join("visible_mask.csv"),
        io::format_mask(world.evaluator.grid(), &mask.visible_mask).as_bytes(),
    )?;
    let summary = RunSummary {
        hash: spec.hash(),
        n_agents: spec.n_agents,
        mode: spec.mode.to_string(),
        prior: spec.prior.to_string(),
        seeds: spec.seeds,
        initial_coverage: run.result.initial_coverage,
        max_coverage: run.result.max_coverage,
        converged_iteration: run.result.converged_iteration,
        best_iteration: best.iteration,
        iterations: run.trace.rows.len() - 1,
        wall_time_s: run.result.wall_time_s,
        best_positions: best.team.positions.iter().map(|p| [p.x, p.y, p.z]).collect(),
    };
    io::write_atomic(
        &out.join("summary.json"),
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    c.say(format!(
        "initial coverage {:.4}, max coverage {:.4} (iteration {}), {:.1}s",
        summary.initial_coverage, summary.max_coverage, summary.converged_iteration, summary.wall_time_s
    ));
    Ok(())
}

fn cmd_batch(c: &Common, minimal_prior: bool) -> Result<()> {
    let batch = c.batch()?;
    let specs = batch.expand()?;
    let options = BatchOptions {
        parallelism: c.parallelism,
        out_dir: Some(c.out_dir()?.to_path_buf()),
        keep_traces: false,
    };
    let report = if minimal_prior {
        minimal_prior_study(&specs, &options)?
    } else {
        run_batch(&specs, &options)?
    };
    let failures: Vec<_> = report.records.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r, e))).collect();
    for (r, e) in &failures {
        eprintln!("warning: run {} ({} agents, {}) failed: {e}", r.index, r.spec.n_agents, r.spec.mode);
    }
    c.say(report.summary.to_table());
    c.say(format!(
        "{} runs, {} failed; results in {}",
        report.records.len(),
        failures.len(),
        c.out.display()
    ));
    Ok(())
}

fn cmd_cvt_only(c: &Common) -> Result<()> {
    let spec = c.scenario()?;
    let out = c.out_dir()?;
    let world = build_world(&spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seeds.cvt);
    let init = cvt_init(&world.approx, spec.n_agents, &mut rng)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "generator", "x", "y", "z"])?;
    let mut record = |state: &covsim_core::cvt::CvtState| -> csv::Result<()> {
        for (i, g) in state.generators.iter().enumerate() {
            w.write_record([
                state.iteration.to_string(),
                i.to_string(),
                g.x.to_string(),
                g.y.to_string(),
                g.z.to_string(),
            ])?;
        }
        Ok(())
    };
    let mut failed = record(&init).err();
    let outcome = cvt_run_from(init, &world.approx, &spec.cvt, &mut rng, |s| {
        if failed.is_none() {
            failed = record(s).err();
        }
    })?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    io::write_atomic(&out.join("cvt_trace.csv"), &bytes)?;
    io::write_atomic(
        &out.join("generators.xyz"),
        io::format_points(&outcome.team.positions).as_bytes(),
    )?;
    let initial = covsim_core::experiment::make_initialization(
        &ScenarioSpec {
            mode: covsim_core::InitMode::Cvt,
            ..spec.clone()
        },
        &world,
    )?;
    io::write_atomic(&out.join("initial.xyz"), io::format_points(&initial.positions).as_bytes())?;
    let cov = world.evaluator.evaluate(&initial).value;
    c.say(format!(
        "{} iterations, converged: {}, initial coverage {:.4}",
        outcome.state.iteration, outcome.converged, cov
    ));
    Ok(())
}

fn cmd_coverage_eval(c: &Common, positions: &Path) -> Result<()> {
    let spec = c.scenario()?;
    let points = io::read_points(positions).with_context(|| format!("reading {}", positions.display()))?;
    if points.is_empty() {
        bail!("{} contains no positions", positions.display());
    }
    let team = TeamConfiguration::new(points);
    let world = build_world(&spec)?;
    if !is_feasible(&team, &world.truth, &world.constraints) {
        eprintln!("warning: positions violate the constraints; evaluating anyway");
    }
    let m = world.evaluator.evaluate(&team);
    let out = c.out_dir()?;
    io::write_atomic(
        &out.join("visible_mask.csv"),
        io::format_mask(world.evaluator.grid(), &m.visible_mask).as_bytes(),
    )?;
    println!("{}", m.value);
    Ok(())
}

fn cmd_replay(c: &Common, trace: &Path) -> Result<()> {
    let spec = c.scenario()?;
    let rows = io::read_trace(trace).with_context(|| format!("reading {}", trace.display()))?;
    let world = build_world(&spec)?;
    let checked = replay(&world, &rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "stored_coverage", "coverage", "feasible"])?;
    let mut infeasible = 0;
    let mut mismatched = 0;
    for (row, (iter, cov, ok)) in rows.iter().zip(&checked) {
        if !ok {
            infeasible += 1;
        }
        if row.coverage.is_some_and(|s| (s - cov).abs() > 1e-12) {
            mismatched += 1;
        }
        w.write_record([
            iter.to_string(),
            row.coverage.map_or(String::new(), |v| v.to_string()),
            cov.to_string(),
            ok.to_string(),
        ])?;
    }
    let out = c.out_dir()?;
    io::write_atomic(&out.join("replay.csv"), &w.into_inner().map_err(|e| e.into_error())?)?;
    let max = checked.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    c.say(format!(
        "{} rows, max coverage {:.4}, {} infeasible, {} differ from the stored coverage",
        rows.len(),
        max,
        infeasible,
        mismatched
    ));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Batch { common, minimal_prior } => cmd_batch(common, *minimal_prior),
        Command::CvtOnly(c) => cmd_cvt_only(c),
        Command::CoverageEval { common, positions } => cmd_coverage_eval(common, positions),
        Command::Replay { common, trace } => cmd_replay(common, trace),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "));
            ExitCode::FAILURE
        }
    }
}
