//! Constrained centroidal Voronoi tessellation of a surface by the
//! probabilistic MacQueen iteration.
//!
//! Voronoi regions are never built explicitly. Each iteration draws random
//! surface samples, assigns every sample to its nearest generator, blends each
//! generator toward the mean of its samples and projects it back onto the
//! surface.

use std::collections::VecDeque;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{project_to_surface, sample_surface_point, AreaTable, HeightField};
use crate::visibility::TeamConfiguration;

/// Sampling density over the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    /// (x, y) uniform over the domain, lifted onto the surface.
    #[default]
    Planar,
    /// Uniform per unit surface area on piecewise-linear surfaces; planar otherwise.
    SurfaceArea,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvtParams {
    /// Samples drawn per iteration; `None` means ten per generator.
    pub samples_per_iter: Option<usize>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_iters: usize,
    /// Movement threshold in meters.
    pub tolerance: f64,
    /// Iterations the movement must stay under `tolerance`.
    pub patience: usize,
    pub density: Density,
}

impl Default for CvtParams {
    fn default() -> Self {
        Self {
            samples_per_iter: None,
            alpha1: 0.9,
            alpha2: 0.1,
            beta1: 0.0,
            beta2: 1.0,
            max_iters: 2000,
            tolerance: 0.01,
            patience: 50,
            density: Density::Planar,
        }
    }
}

impl CvtParams {
    /// Weights `(alpha1, alpha2, beta1, beta2)` with defaults elsewhere.
    pub fn with_weights(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let p = Self {
            alpha1,
            alpha2,
            beta1,
            beta2,
            ..Self::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        const EPS: f64 = 1e-12;
        if !(self.alpha2 > 0.0 && self.beta2 > 0.0) {
            return Err(Error::param("cvt.alpha2", "alpha2 and beta2 must be positive"));
        }
        if (self.alpha1 + self.alpha2 - 1.0).abs() > EPS || (self.beta1 + self.beta2 - 1.0).abs() > EPS {
            return Err(Error::param(
                "cvt.alpha1",
                "requires alpha1 + alpha2 = 1 and beta1 + beta2 = 1",
            ));
        }
        if self.samples_per_iter == Some(0) {
            return Err(Error::param("cvt.samples_per_iter", "must be positive"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::param("cvt.tolerance", "must be >= 0"));
        }
        if self.patience == 0 {
            return Err(Error::param("cvt.patience", "must be positive"));
        }
        Ok(())
    }

    pub fn samples_for(&self, n_generators: usize) -> usize {
        self.samples_per_iter.unwrap_or(10 * n_generators)
    }

    /// Blend of a generator `z` with the mean `y` of its samples after it has
    /// absorbed `j` updates.
    pub fn blend(&self, j: u64, z: &Point3<f64>, y: &Point3<f64>) -> Point3<f64> {
        let j = j as f64;
        let wz = self.alpha1 * j + self.beta1;
        let wy = self.alpha2 * j + self.beta2;
        Point3::from((z.coords * wz + y.coords * wy) / (j + 1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvtState {
    pub generators: Vec<Point3<f64>>,
    pub counters: Vec<u64>,
    pub iteration: usize,
}

impl CvtState {
    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Index of the generator nearest to `p`; ties go to the lowest index.
    pub fn nearest(&self, p: &Point3<f64>) -> usize {
        nearest_index(&self.generators, p)
    }
}

fn nearest_index(generators: &[Point3<f64>], p: &Point3<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, g) in generators.iter().enumerate() {
        let d = (g - p).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// `n_generators` random starting generators on the surface, each with counter 1.
pub fn cvt_init<R: Rng + ?Sized>(surface: &HeightField, n_generators: usize, rng: &mut R) -> Result<CvtState> {
    if n_generators == 0 {
        return Err(Error::param("n_generators", "must be at least 1"));
    }
    let samples = crate::surface::sample_surface_uniform(surface, n_generators, rng);
    Ok(CvtState {
        generators: samples.points,
        counters: vec![1; n_generators],
        iteration: 0,
    })
}

/// One MacQueen iteration. Returns the largest generator displacement.
pub fn cvt_step<R: Rng + ?Sized>(
    state: &mut CvtState,
    surface: &HeightField,
    params: &CvtParams,
    rng: &mut R,
) -> f64 {
    let table = match params.density {
        Density::SurfaceArea => AreaTable::new(surface),
        Density::Planar => None,
    };
    step_with(state, surface, params, table.as_ref(), rng)
}

fn step_with<R: Rng + ?Sized>(
    state: &mut CvtState,
    surface: &HeightField,
    params: &CvtParams,
    table: Option<&AreaTable>,
    rng: &mut R,
) -> f64 {
    let n = state.len();
    let mut sums = vec![Vector3::zeros(); n];
    let mut counts = vec![0usize; n];
    for _ in 0..params.samples_for(n) {
        let y = sample_surface_point(surface, table, rng);
        let i = nearest_index(&state.generators, &y);
        sums[i] += y.coords;
        counts[i] += 1;
    }
    let mut moved: f64 = 0.0;
    for i in 0..n {
        if counts[i] == 0 {
            continue;
        }
        let mean = Point3::from(sums[i] / counts[i] as f64);
        let blended = params.blend(state.counters[i], &state.generators[i], &mean);
        let next = project_to_surface(surface, &blended);
        moved = moved.max((next - state.generators[i]).norm());
        state.generators[i] = next;
        state.counters[i] += 1;
    }
    state.iteration += 1;
    moved
}

#[derive(Debug, Clone)]
pub struct CvtOutcome {
    pub team: TeamConfiguration,
    pub converged: bool,
    pub state: CvtState,
}

/// Runs [`cvt_step`] from random generators until the largest displacement
/// stays below `tolerance` for `patience` consecutive iterations, or until
/// `max_iters`.
pub fn cvt_run<R: Rng + ?Sized>(
    surface: &HeightField,
    n: usize,
    params: &CvtParams,
    rng: &mut R,
) -> Result<CvtOutcome> {
    let init = cvt_init(surface, n, rng)?;
    cvt_run_from(init, surface, params, rng, |_| {})
}

/// [`cvt_run`] from a given state; `observe` sees the state after every iteration.
pub fn cvt_run_from<R, F>(
    mut state: CvtState,
    surface: &HeightField,
    params: &CvtParams,
    rng: &mut R,
    mut observe: F,
) -> Result<CvtOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&CvtState),
{
    params.validate()?;
    let table = match params.density {
        Density::SurfaceArea => AreaTable::new(surface),
        Density::Planar => None,
    };
    let mut window = VecDeque::with_capacity(params.patience);
    let mut converged = false;
    for _ in 0..params.max_iters {
        let moved = step_with(&mut state, surface, params, table.as_ref(), rng);
        observe(&state);
        if window.len() == params.patience {
            window.pop_front();
        }
        window.push_back(moved);
        if window.len() == params.patience && window.iter().all(|&m| m < params.tolerance) {
            converged = true;
            break;
        }
    }
    Ok(CvtOutcome {
        team: TeamConfiguration::new(state.generators.clone()),
        converged,
        state,
    })
}

/// Monte-Carlo estimate of the mean squared distance from a surface sample
/// to its nearest generator.
pub fn cvt_energy<R: Rng + ?Sized>(
    generators: &[Point3<f64>],
    surface: &HeightField,
    n_probe: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_probe == 0 {
        return Err(Error::param("n_probe", "must be at least 1"));
    }
    if generators.is_empty() {
        return Err(Error::param("generators", "must not be empty"));
    }
    let total: f64 = (0..n_probe)
        .map(|_| {
            let (x, y) = surface.domain().sample_uniform(rng);
            let p = surface.point_at(x, y);
            let i = nearest_index(generators, &p);
            (generators[i] - p).norm_squared()
        })
        .sum();
    Ok(total / n_probe as f64)
}
