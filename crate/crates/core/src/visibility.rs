//! Line-of-sight visibility and the coverage objective.
//!
//! A surface point is covered when at least one agent is within sensing range
//! and the straight segment between them stays on or above the terrain. The
//! coverage value is the covered fraction of a discretized surface.

use nalgebra::Point3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{DomainRect, HeightField};

/// Distance kept free at the target end of a sight line so a surface point
/// does not occlude itself.
pub const TARGET_CLEARANCE: f64 = 0.01;

/// Omni-directional sensor with a maximum range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub d_max: f64,
}

impl SensorModel {
    pub fn new(d_max: f64) -> Result<Self> {
        if !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::param("d_max", "must be positive"));
        }
        Ok(Self { d_max })
    }
}

/// Positions of all agents in 3-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamConfiguration {
    pub positions: Vec<Point3<f64>>,
}

impl TeamConfiguration {
    pub fn new(positions: Vec<Point3<f64>>) -> Self {
        Self { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `[x0, y0, z0, x1, y1, z1, ...]`
    pub fn flatten(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn from_flat(state: &[f64]) -> Self {
        assert!(state.len().is_multiple_of(3), "flattened state must hold xyz triples");
        Self {
            positions: state
                .chunks_exact(3)
                .map(|c| Point3::new(c[0], c[1], c[2]))
                .collect(),
        }
    }
}

/// Cell-centered discretization of a surface used to integrate coverage.
#[derive(Debug, Clone)]
pub struct SurfaceGrid {
    domain: DomainRect,
    nx: usize,
    ny: usize,
    resolution: f64,
    points: Vec<Point3<f64>>,
    weights: Vec<f64>,
}

impl SurfaceGrid {
    /// Tiles the domain with cells no larger than `resolution` on a side.
    pub fn new(field: &HeightField, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::param("grid_resolution", "must be positive"));
        }
        let domain = *field.domain();
        let nx = cells_along(domain.width(), resolution);
        let ny = cells_along(domain.height(), resolution);
        let dx = domain.width() / nx as f64;
        let dy = domain.height() / ny as f64;
        let mut points = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            let y = domain.y_min + (row as f64 + 0.5) * dy;
            for col in 0..nx {
                let x = domain.x_min + (col as f64 + 0.5) * dx;
                points.push(field.point_at(x, y));
            }
        }
        Ok(Self {
            domain,
            nx,
            ny,
            resolution,
            weights: vec![dx * dy; nx * ny],
            points,
        })
    }

    pub fn domain(&self) -> &DomainRect {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            self.domain.width() / self.nx as f64,
            self.domain.height() / self.ny as f64,
        )
    }

    /// Surface points at the cell centers, row-major with `y` increasing by row.
    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn col_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        index_range(lo, hi, self.domain.x_min, self.domain.width(), self.nx)
    }

    fn row_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        index_range(lo, hi, self.domain.y_min, self.domain.height(), self.ny)
    }
}

fn cells_along(span: f64, resolution: f64) -> usize {
    let n = span / resolution;
    // Tolerate rounding in spans that are exact multiples of the resolution.
    let rounded = n.round();
    if (n - rounded).abs() < 1e-9 * n.max(1.0) {
        (rounded as usize).max(1)
    } else {
        (n.ceil() as usize).max(1)
    }
}

fn index_range(lo: f64, hi: f64, origin: f64, span: f64, n: usize) -> std::ops::Range<usize> {
    let scale = n as f64 / span;
    let first = ((lo - origin) * scale - 0.5).ceil().max(0.0) as usize;
    let last = ((hi - origin) * scale - 0.5).floor();
    if last < 0.0 {
        return 0..0;
    }
    let last = (last as usize).min(n - 1);
    first.min(n)..(last + 1).max(first.min(n))
}

/// Result of a coverage evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMeasurement {
    /// Covered fraction of the total surface weight, noise-free.
    pub value: f64,
    /// Standard deviation of the noise applied by [`noisy_coverage`], if any.
    pub noise_std: f64,
    /// One flag per grid cell, aligned with [`SurfaceGrid::points`].
    pub visible_mask: Vec<bool>,
}

/// Whether the segment from `from` to `to` clears the terrain.
///
/// The segment is probed at a spacing of at most `step`, skipping both
/// endpoints and anything within [`TARGET_CLEARANCE`] of `to`. The observer
/// at `from` must sit strictly above the surface.
pub fn line_of_sight(field: &HeightField, from: &Point3<f64>, to: &Point3<f64>, step: f64) -> bool {
    let mut buf = Vec::new();
    los_with_buffer(field, from, to, step, &mut buf)
}

fn los_with_buffer(
    field: &HeightField,
    from: &Point3<f64>,
    to: &Point3<f64>,
    step: f64,
    buf: &mut Vec<f64>,
) -> bool {
    if from.z <= field.eval(from.x, from.y) {
        return false;
    }
    let length = (to - from).norm();
    if length <= TARGET_CLEARANCE {
        return true;
    }
    let n = (length / step).ceil().max(1.0) as usize;
    // Probes k = 1..n-1 sit at parameter k/n; keep those farther than the
    // clearance from the target.
    let last_t = 1.0 - TARGET_CLEARANCE / length;
    let mut count = n.saturating_sub(1);
    while count > 0 && (count as f64) / (n as f64) > last_t {
        count -= 1;
    }
    if count == 0 {
        return true;
    }
    let inv = 1.0 / n as f64;
    let delta = [(to.x - from.x) * inv, (to.y - from.y) * inv];
    let dz = (to.z - from.z) * inv;
    buf.clear();
    buf.resize(count, 0.0);
    field.eval_steps([from.x, from.y], delta, buf);
    buf.iter()
        .enumerate()
        .all(|(k, &ground)| from.z + (k + 1) as f64 * dz >= ground)
}

/// Reusable coverage evaluator for one terrain, grid and sensor.
#[derive(Debug, Clone)]
pub struct CoverageEvaluator {
    field: HeightField,
    grid: SurfaceGrid,
    sensor: SensorModel,
    los_step: f64,
}

impl CoverageEvaluator {
    /// Probes sight lines at half the grid resolution.
    pub fn new(field: HeightField, grid: SurfaceGrid, sensor: SensorModel) -> Self {
        let los_step = 0.5 * grid.resolution();
        Self {
            field,
            grid,
            sensor,
            los_step,
        }
    }

    pub fn with_los_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::param("los_step", "must be positive"));
        }
        self.los_step = step;
        Ok(self)
    }

    pub fn field(&self) -> &HeightField {
        &self.field
    }

    pub fn grid(&self) -> &SurfaceGrid {
        &self.grid
    }

    pub fn sensor(&self) -> &SensorModel {
        &self.sensor
    }

    pub fn evaluate(&self, team: &TeamConfiguration) -> CoverageMeasurement {
        let grid = &self.grid;
        let d_max = self.sensor.d_max;
        let d2 = d_max * d_max;
        let mut mask = vec![false; grid.points.len()];
        let mut buf = Vec::new();
        for agent in &team.positions {
            let rows = grid.row_range(agent.y - d_max, agent.y + d_max);
            let cols = grid.col_range(agent.x - d_max, agent.x + d_max);
            for row in rows {
                let base = row * grid.nx;
                for idx in base + cols.start..base + cols.end {
                    if mask[idx] {
                        continue;
                    }
                    let q = &grid.points[idx];
                    if (q - agent).norm_squared() > d2 {
                        continue;
                    }
                    if los_with_buffer(&self.field, agent, q, self.los_step, &mut buf) {
                        mask[idx] = true;
                    }
                }
            }
        }
        let covered: f64 = mask
            .iter()
            .zip(&grid.weights)
            .filter(|(v, _)| **v)
            .map(|(_, w)| w)
            .sum();
        CoverageMeasurement {
            value: covered / grid.total_weight(),
            noise_std: 0.0,
            visible_mask: mask,
        }
    }
}

/// Covered fraction of `grid` for `team`, with sight lines probed at half the
/// grid resolution.
pub fn coverage(
    field: &HeightField,
    grid: &SurfaceGrid,
    team: &TeamConfiguration,
    sensor: &SensorModel,
) -> CoverageMeasurement {
    CoverageEvaluator::new(field.clone(), grid.clone(), *sensor).evaluate(team)
}

/// Adds zero-mean Gaussian noise to a measurement and clamps to `[0, 1]`.
pub fn noisy_coverage<R: Rng + ?Sized>(
    measurement: &CoverageMeasurement,
    noise_std: f64,
    rng: &mut R,
) -> Result<f64> {
    noisy_value(measurement.value, noise_std, rng)
}

pub(crate) fn noisy_value<R: Rng + ?Sized>(value: f64, noise_std: f64, rng: &mut R) -> Result<f64> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::param("noise_std", "must be >= 0"));
    }
    if noise_std == 0.0 {
        return Ok(value);
    }
    let normal = Normal::new(0.0, noise_std).expect("validated std");
    Ok((value + normal.sample(rng)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::DomainRect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(z: f64) -> HeightField {
        HeightField::flat(DomainRect::default(), z).unwrap()
    }

    /// Ridge of height 20 along x = 5 on a 10 m square, 0 elsewhere.
    fn wall() -> HeightField {
        let domain = DomainRect::square(10.0).unwrap();
        let (nx, ny) = (101, 11);
        let mut v = vec![0.0; nx * ny];
        for row in 0..ny {
            for col in 49..=51 {
                v[row * nx + col] = 20.0;
            }
        }
        HeightField::from_grid(domain, nx, ny, v).unwrap()
    }

    #[test]
    fn flat_terrain_never_occludes() {
        let f = flat(0.0);
        assert!(line_of_sight(&f, &Point3::new(0.0, 0.0, 10.0), &Point3::new(10.0, 0.0, 0.0), 0.5));
    }

    #[test]
    fn wall_blocks_the_segment() {
        let f = wall();
        let a = Point3::new(0.0, 5.0, 5.0);
        let b = Point3::new(10.0, 5.0, 5.0);
        // The segment stays at z = 5 while the wall reaches 20 at x = 5.
        assert!(f.eval(5.0, 5.0) > 5.0);
        assert!(!line_of_sight(&f, &a, &b, 0.05));
        assert!(line_of_sight(&f, &a, &Point3::new(4.0, 5.0, 0.0), 0.05));
    }

    #[test]
    fn vertical_segment_is_clear_above_surface() {
        let f = wall();
        let below = Point3::new(2.0, 3.0, 0.0);
        assert!(line_of_sight(&f, &Point3::new(2.0, 3.0, 7.0), &below, 0.1));
        assert!(!line_of_sight(&f, &Point3::new(2.0, 3.0, 0.0), &below, 0.1));
    }

    #[test]
    fn grid_tiles_domain() {
        let f = flat(0.0);
        let g = SurfaceGrid::new(&f, 3.0).unwrap();
        assert_eq!((g.nx(), g.ny()), (34, 34));
        assert!((g.total_weight() - 10_000.0).abs() < 1e-6);
        let g = SurfaceGrid::new(&f, 2.0).unwrap();
        assert_eq!(g.points().len(), 2500);
        assert_eq!(g.points()[0], Point3::new(1.0, 1.0, 0.0));
    }

    #[test]
    fn out_of_range_agent_sees_nothing() {
        let f = flat(0.0);
        let g = SurfaceGrid::new(&f, 2.0).unwrap();
        let team = TeamConfiguration::new(vec![Point3::new(50.0, 50.0, 30.0)]);
        let m = coverage(&f, &g, &team, &SensorModel::new(25.0).unwrap());
        assert_eq!(m.value, 0.0);
    }

    #[test]
    fn duplicated_agent_adds_nothing() {
        let f = flat(0.0);
        let g = SurfaceGrid::new(&f, 2.0).unwrap();
        let s = SensorModel::new(25.0).unwrap();
        let p = Point3::new(40.0, 60.0, 8.0);
        let one = coverage(&f, &g, &TeamConfiguration::new(vec![p]), &s);
        let two = coverage(&f, &g, &TeamConfiguration::new(vec![p, p]), &s);
        assert_eq!(one, two);
    }

    #[test]
    fn flat_disk_matches_analytic_area() {
        let f = flat(0.0);
        let g = SurfaceGrid::new(&f, 0.5).unwrap();
        let (h, d) = (10.0, 25.0);
        let team = TeamConfiguration::new(vec![Point3::new(50.0, 50.0, h)]);
        let m = coverage(&f, &g, &team, &SensorModel::new(d).unwrap());
        let exact = std::f64::consts::PI * (d * d - h * h) / 10_000.0;
        // Two cells of the default 2 m grid.
        assert!((m.value - exact).abs() <= 8.0 / 10_000.0, "{} vs {exact}", m.value);
    }

    #[test]
    fn noise_free_measurement_is_identity() {
        let m = CoverageMeasurement {
            value: 0.37,
            noise_std: 0.0,
            visible_mask: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(noisy_coverage(&m, 0.0, &mut rng).unwrap(), 0.37);
        assert!(noisy_coverage(&m, -1.0, &mut rng).is_err());
    }

    #[test]
    fn noise_is_unbiased_and_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let half = CoverageMeasurement {
            value: 0.5,
            noise_std: 0.0,
            visible_mask: vec![],
        };
        let n = 10_000;
        let mean = (0..n)
            .map(|_| noisy_coverage(&half, 0.01, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        // Standard error 0.01 / sqrt(1e4) = 1e-4.
        assert!((mean - 0.5).abs() < 0.001);
        let full = CoverageMeasurement { value: 1.0, ..half };
        assert!((0..1000).all(|_| noisy_coverage(&full, 0.05, &mut rng).unwrap() <= 1.0));
    }

    #[test]
    fn flatten_round_trips() {
        let t = TeamConfiguration::new(vec![Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
        assert_eq!(TeamConfiguration::from_flat(&t.flatten()), t);
    }
}
