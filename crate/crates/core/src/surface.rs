//! Height fields over a rectangular domain.
//!
//! Both the ground-truth terrain and its coarse approximation are modelled as
//! single-valued surfaces `z = f(x, y)`. Four representations are supported:
//! analytic Gaussian mixtures (synthetic terrains), piecewise-linear
//! interpolants over a Delaunay triangulation of sparse samples, constant
//! planes, and externally supplied node grids with bilinear interpolation.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::Point3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in the (x, y) plane, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl DomainRect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let rect = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        rect.validate()?;
        Ok(rect)
    }

    /// The `side` x `side` square anchored at the origin.
    pub fn square(side: f64) -> Result<Self> {
        Self::new(0.0, side, 0.0, side)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("domain", "bounds must be finite"));
        }
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::param("domain", "requires x_min < x_max and y_min < y_max"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    /// Corners in counter-clockwise order starting at `(x_min, y_min)`.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x_min, self.y_min),
            (self.x_max, self.y_min),
            (self.x_max, self.y_max),
            (self.x_min, self.y_max),
        ]
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let x = self.x_min + rng.random::<f64>() * self.width();
        let y = self.y_min + rng.random::<f64>() * self.height();
        (x, y)
    }
}

impl Default for DomainRect {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 100.0,
            y_min: 0.0,
            y_max: 100.0,
        }
    }
}

/// One isotropic bump of a Gaussian-mixture terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub peak: f64,
    pub sigma: f64,
}

/// Concrete Gaussian-mixture terrain: `base + sum_j peak_j exp(-r_j^2 / (2 sigma_j^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub domain: DomainRect,
    pub components: Vec<GaussianBump>,
    pub base: f64,
    /// Seed the components were drawn from, if they were drawn at random.
    pub seed: Option<u64>,
}

/// Distribution of randomly generated Gaussian-mixture terrains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainParams {
    pub components: usize,
    pub sigma: f64,
    pub peak_min: f64,
    pub peak_max: f64,
    pub base: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            components: 7,
            sigma: 12.0,
            peak_min: 5.0,
            peak_max: 30.0,
            base: 0.0,
        }
    }
}

impl TerrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("terrain.sigma", "must be positive"));
        }
        if !(self.peak_min >= 0.0 && self.peak_max >= self.peak_min && self.peak_max.is_finite()) {
            return Err(Error::param(
                "terrain.peak_min",
                "requires 0 <= peak_min <= peak_max",
            ));
        }
        if !self.base.is_finite() {
            return Err(Error::param("terrain.base", "must be finite"));
        }
        Ok(())
    }
}

impl GaussianMixtureSpec {
    /// Draws a mixture with centers uniform over the domain and peaks uniform
    /// in `[peak_min, peak_max]`.
    pub fn random(domain: DomainRect, params: &TerrainParams, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        domain.validate()?;
        params.validate()?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let components = (0..params.components)
            .map(|_| {
                let (cx, cy) = domain.sample_uniform(&mut rng);
                let peak = params.peak_min + rng.random::<f64>() * (params.peak_max - params.peak_min);
                GaussianBump {
                    center: [cx, cy],
                    peak,
                    sigma: params.sigma,
                }
            })
            .collect();
        Ok(Self {
            domain,
            components,
            base: params.base,
            seed: Some(seed),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !self.base.is_finite() {
            return Err(Error::param("terrain.base", "must be finite"));
        }
        for c in &self.components {
            if !(c.peak >= 0.0 && c.peak.is_finite()) {
                return Err(Error::param("terrain.peak", "peak heights must be >= 0"));
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::param("terrain.sigma", "must be positive"));
            }
            if !self.domain.contains(c.center[0], c.center[1]) {
                return Err(Error::param("terrain.center", "centers must lie inside the domain"));
            }
        }
        Ok(())
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.base
            + self
                .components
                .iter()
                .map(|c| {
                    let dx = x - c.center[0];
                    let dy = y - c.center[1];
                    c.peak * (-(dx * dx + dy * dy) / (2.0 * c.sigma * c.sigma)).exp()
                })
                .sum::<f64>()
    }

    /// Heights at `start + k * delta` for `k = 1..=count`, using a
    /// multiplicative recurrence per component instead of one `exp` per point.
    fn eval_steps(&self, start: [f64; 2], delta: [f64; 2], count: usize, out: &mut [f64]) {
        out[..count].fill(self.base);
        let dd = delta[0] * delta[0] + delta[1] * delta[1];
        let end = [
            start[0] + count as f64 * delta[0],
            start[1] + count as f64 * delta[1],
        ];
        for c in &self.components {
            let inv = 1.0 / (2.0 * c.sigma * c.sigma);
            let w0 = [start[0] - c.center[0], start[1] - c.center[1]];
            let w1 = [end[0] - c.center[0], end[1] - c.center[1]];
            let reach = (w0[0] * w0[0] + w0[1] * w0[1]).max(w1[0] * w1[0] + w1[1] * w1[1]) * inv;
            if reach > 600.0 || count < 4 {
                for (k, h) in out[..count].iter_mut().enumerate() {
                    let t = (k + 1) as f64;
                    let dx = w0[0] + t * delta[0];
                    let dy = w0[1] + t * delta[1];
                    *h += c.peak * (-(dx * dx + dy * dy) * inv).exp();
                }
                continue;
            }
            let wd = w0[0] * delta[0] + w0[1] * delta[1];
            let dx = w0[0] + delta[0];
            let dy = w0[1] + delta[1];
            let mut g = (-(dx * dx + dy * dy) * inv).exp();
            let mut r = (-(2.0 * wd + 3.0 * dd) * inv).exp();
            let q = (-2.0 * dd * inv).exp();
            for h in out[..count].iter_mut() {
                *h += c.peak * g;
                g *= r;
                r *= q;
            }
        }
    }
}

/// What a [`HeightField`] is backed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    GaussianMixture,
    PiecewiseLinear,
    Flat,
    ExternalGrid,
}

/// A deterministic, total surface `z = f(x, y)` over a rectangle.
///
/// Queries outside the domain are evaluated at the clamped location. Cloning
/// is cheap; the heavy representations are shared.
#[derive(Debug, Clone)]
pub struct HeightField {
    domain: DomainRect,
    repr: Repr,
}

#[derive(Debug, Clone)]
enum Repr {
    Mixture(Arc<GaussianMixtureSpec>),
    Linear(Arc<TriangleMesh>),
    Flat(f64),
    Grid(Arc<NodeGrid>),
}

impl HeightField {
    pub fn flat(domain: DomainRect, z: f64) -> Result<Self> {
        domain.validate()?;
        if !z.is_finite() {
            return Err(Error::param("z", "must be finite"));
        }
        Ok(Self {
            domain,
            repr: Repr::Flat(z),
        })
    }

    /// Node grid with `nx` columns and `ny` rows; `values[row * nx + col]` is
    /// the height at `(x_min + col * dx, y_min + row * dy)`.
    pub fn from_grid(domain: DomainRect, nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        domain.validate()?;
        if nx < 2 || ny < 2 {
            return Err(Error::param("grid", "needs at least 2 x 2 nodes"));
        }
        if values.len() != nx * ny {
            return Err(Error::param(
                "grid",
                format!("expected {} values, found {}", nx * ny, values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("grid", "values must be finite"));
        }
        Ok(Self {
            domain,
            repr: Repr::Grid(Arc::new(NodeGrid {
                domain,
                nx,
                ny,
                values,
            })),
        })
    }

    pub fn domain(&self) -> &DomainRect {
        &self.domain
    }

    pub fn kind(&self) -> FieldKind {
        match self.repr {
            Repr::Mixture(_) => FieldKind::GaussianMixture,
            Repr::Linear(_) => FieldKind::PiecewiseLinear,
            Repr::Flat(_) => FieldKind::Flat,
            Repr::Grid(_) => FieldKind::ExternalGrid,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (x, y) = self.domain.clamp(x, y);
        match &self.repr {
            Repr::Mixture(m) => m.eval(x, y),
            Repr::Linear(mesh) => mesh.eval(x, y),
            Repr::Flat(z) => *z,
            Repr::Grid(g) => g.eval(x, y),
        }
    }

    /// Heights at `start + k * delta` for `k = 1..=out.len()`.
    ///
    /// Agrees with [`HeightField::eval`] up to floating-point rounding; the
    /// Gaussian-mixture path avoids per-point exponentials. The whole run of
    /// points must lie inside the domain.
    pub fn eval_steps(&self, start: [f64; 2], delta: [f64; 2], out: &mut [f64]) {
        let count = out.len();
        match &self.repr {
            Repr::Mixture(m) => m.eval_steps(start, delta, count, out),
            Repr::Flat(z) => out.fill(*z),
            _ => {
                for (k, h) in out.iter_mut().enumerate() {
                    let t = (k + 1) as f64;
                    *h = self.eval(start[0] + t * delta[0], start[1] + t * delta[1]);
                }
            }
        }
    }

    pub fn point_at(&self, x: f64, y: f64) -> Point3<f64> {
        Point3::new(x, y, self.eval(x, y))
    }

    /// Triangles of a piecewise-linear field, `None` for other kinds.
    pub fn triangles(&self) -> Option<&[Triangle]> {
        match &self.repr {
            Repr::Linear(mesh) => Some(&mesh.triangles),
            _ => None,
        }
    }

    /// The mixture behind a Gaussian-mixture field.
    pub fn mixture(&self) -> Option<&GaussianMixtureSpec> {
        match &self.repr {
            Repr::Mixture(m) => Some(m),
            _ => None,
        }
    }

    /// Node heights sampled on an `nx` x `ny` lattice spanning the domain,
    /// row-major with `y` increasing by row.
    pub fn sample_nodes(&self, nx: usize, ny: usize) -> Vec<f64> {
        let d = &self.domain;
        let mut out = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            let y = lattice(d.y_min, d.y_max, row, ny);
            for col in 0..nx {
                out.push(self.eval(lattice(d.x_min, d.x_max, col, nx), y));
            }
        }
        out
    }
}

fn lattice(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n <= 1 {
        return lo;
    }
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

#[derive(Debug)]
struct NodeGrid {
    domain: DomainRect,
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl NodeGrid {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.domain.x_min) / self.domain.width() * (self.nx - 1) as f64;
        let fy = (y - self.domain.y_min) / self.domain.height() * (self.ny - 1) as f64;
        let col = (fx.floor() as usize).min(self.nx - 2);
        let row = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - col as f64;
        let ty = fy - row as f64;
        let v = |r: usize, c: usize| self.values[r * self.nx + c];
        let bottom = v(row, col) * (1.0 - tx) + v(row, col + 1) * tx;
        let top = v(row + 1, col) * (1.0 - tx) + v(row + 1, col + 1) * tx;
        bottom * (1.0 - ty) + top * ty
    }
}

/// Builds the analytic terrain described by `spec`.
pub fn generate_terrain(spec: &GaussianMixtureSpec) -> Result<HeightField> {
    spec.validate()?;
    Ok(HeightField {
        domain: spec.domain,
        repr: Repr::Mixture(Arc::new(spec.clone())),
    })
}

/// A set of surface samples with distinct (x, y) locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SamplePointSet {
    pub points: Vec<Point3<f64>>,
}

impl SamplePointSet {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, domain: &DomainRect) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::InvalidSamples(format!(
                "need at least 3 samples, found {}",
                self.points.len()
            )));
        }
        let mut seen = HashSet::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidSamples(format!("sample {i} is not finite")));
            }
            if !domain.contains(p.x, p.y) {
                return Err(Error::InvalidSamples(format!(
                    "sample {i} at ({}, {}) lies outside the domain",
                    p.x, p.y
                )));
            }
            if !seen.insert(xy_key(p.x, p.y)) {
                return Err(Error::InvalidSamples(format!(
                    "sample {i} duplicates the location ({}, {})",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }
}

fn xy_key(x: f64, y: f64) -> (u64, u64) {
    // +0.0 and -0.0 are the same location.
    ((x + 0.0).to_bits(), (y + 0.0).to_bits())
}

/// Draws `count` points with (x, y) uniform over the domain, lifted onto the
/// surface. Colliding locations are redrawn.
pub fn sample_surface_uniform<R: Rng + ?Sized>(
    field: &HeightField,
    count: usize,
    rng: &mut R,
) -> SamplePointSet {
    let mut seen = HashSet::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    while points.len() < count {
        let (x, y) = field.domain.sample_uniform(rng);
        if seen.insert(xy_key(x, y)) {
            points.push(field.point_at(x, y));
        }
    }
    SamplePointSet { points }
}

/// Vertical projection: clamps (x, y) into the domain and snaps z onto the surface.
pub fn project_to_surface(field: &HeightField, point: &Point3<f64>) -> Point3<f64> {
    let (x, y) = field.domain.clamp(point.x, point.y);
    field.point_at(x, y)
}

/// A triangle of a piecewise-linear surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Point3<f64>; 3],
}

impl Triangle {
    /// Planar (x, y) area.
    pub fn planar_area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs()
    }

    /// Area of the lifted triangle in 3-space.
    pub fn surface_area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    fn barycentric(&self, x: f64, y: f64) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
        let l0 = ((b.y - c.y) * (x - c.x) + (c.x - b.x) * (y - c.y)) / det;
        let l1 = ((c.y - a.y) * (x - c.x) + (a.x - c.x) * (y - c.y)) / det;
        [l0, l1, 1.0 - l0 - l1]
    }

    fn interpolate(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c] = self.vertices;
        // Exact at the vertices: one weight is 1, the others 0.
        for v in &self.vertices {
            if v.x == x && v.y == y {
                return (v.z, 1.0);
            }
        }
        let l = self.barycentric(x, y);
        let inside = l[0].min(l[1]).min(l[2]);
        (l[0] * a.z + l[1] * b.z + l[2] * c.z, inside)
    }
}

#[derive(Debug)]
struct TriangleMesh {
    domain: DomainRect,
    triangles: Vec<Triangle>,
    buckets: Vec<Vec<u32>>,
    bx: usize,
    by: usize,
}

impl TriangleMesh {
    fn new(domain: DomainRect, triangles: Vec<Triangle>) -> Self {
        let side = ((triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 64);
        let (bx, by) = (side, side);
        let mut buckets = vec![Vec::new(); bx * by];
        for (i, t) in triangles.iter().enumerate() {
            let xs = t.vertices.map(|v| v.x);
            let ys = t.vertices.map(|v| v.y);
            let (c0, c1) = bucket_span(&domain, xs, bx, true);
            let (r0, r1) = bucket_span(&domain, ys, by, false);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * bx + c].push(i as u32);
                }
            }
        }
        Self {
            domain,
            triangles,
            buckets,
            bx,
            by,
        }
    }

    fn bucket_of(&self, x: f64, y: f64) -> usize {
        let c = bucket_index(x, self.domain.x_min, self.domain.width(), self.bx);
        let r = bucket_index(y, self.domain.y_min, self.domain.height(), self.by);
        r * self.bx + c
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for &i in &self.buckets[self.bucket_of(x, y)] {
            let (z, inside) = self.triangles[i as usize].interpolate(x, y);
            if inside >= 0.0 {
                return z;
            }
            if inside > best.1 {
                best = (z, inside);
            }
        }
        if best.1 > f64::NEG_INFINITY {
            return best.0;
        }
        // Unreachable for a mesh covering the domain; fall back to a full scan.
        self.triangles
            .iter()
            .map(|t| t.interpolate(x, y))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(z, _)| z)
            .unwrap_or(0.0)
    }
}

fn bucket_index(v: f64, lo: f64, span: f64, n: usize) -> usize {
    (((v - lo) / span * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn bucket_span(domain: &DomainRect, vs: [f64; 3], n: usize, is_x: bool) -> (usize, usize) {
    let (lo, span) = if is_x {
        (domain.x_min, domain.width())
    } else {
        (domain.y_min, domain.height())
    };
    let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 1e-9 * span;
    (
        bucket_index(min - pad, lo, span, n),
        bucket_index(max + pad, lo, span, n),
    )
}

#[derive(Debug, Clone, Copy)]
struct Site {
    x: f64,
    y: f64,
    z: f64,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }
}

/// Piecewise-linear interpolant of `samples` over a Delaunay triangulation.
///
/// Domain corners missing from the samples are added at the height of the
/// nearest sample so that the interpolant covers the whole rectangle.
pub fn build_piecewise_linear(samples: &SamplePointSet, domain: &DomainRect) -> Result<HeightField> {
    domain.validate()?;
    samples.validate(domain)?;
    if all_collinear(&samples.points) {
        return Err(Error::DegenerateSamples);
    }

    let mut sites: Vec<Site> = samples
        .points
        .iter()
        .map(|p| Site {
            x: p.x + 0.0,
            y: p.y + 0.0,
            z: p.z,
        })
        .collect();
    for (cx, cy) in domain.corners() {
        if sites.iter().any(|s| s.x == cx && s.y == cy) {
            continue;
        }
        let nearest = samples
            .points
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| {
                let da = (a.x - cx).powi(2) + (a.y - cy).powi(2);
                let db = (b.x - cx).powi(2) + (b.y - cy).powi(2);
                da.total_cmp(&db).then(i.cmp(j))
            })
            .map(|(_, p)| p.z)
            .expect("validated non-empty");
        sites.push(Site {
            x: cx,
            y: cy,
            z: nearest,
        });
    }
    // Insertion order settles co-circular ties.
    sites.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let mut tri: DelaunayTriangulation<Site> = DelaunayTriangulation::new();
    for s in &sites {
        tri.insert(*s)
            .map_err(|e| Error::InvalidSamples(format!("triangulation failed: {e:?}")))?;
    }
    let triangles: Vec<Triangle> = tri
        .inner_faces()
        .map(|f| {
            let vs = f.vertices().map(|v| {
                let s = v.data();
                Point3::new(s.x, s.y, s.z)
            });
            Triangle { vertices: vs }
        })
        .filter(|t| t.planar_area() > 0.0)
        .collect();
    if triangles.is_empty() {
        return Err(Error::DegenerateSamples);
    }
    Ok(HeightField {
        domain: *domain,
        repr: Repr::Linear(Arc::new(TriangleMesh::new(*domain, triangles))),
    })
}

fn all_collinear(points: &[Point3<f64>]) -> bool {
    let Some(a) = points.first() else {
        return true;
    };
    let scale = points
        .iter()
        .map(|p| (p.x - a.x).abs().max((p.y - a.y).abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return true;
    }
    let Some(b) = points
        .iter()
        .max_by(|p, q| {
            let dp = (p.x - a.x).powi(2) + (p.y - a.y).powi(2);
            let dq = (q.x - a.x).powi(2) + (q.y - a.y).powi(2);
            dp.total_cmp(&dq)
        })
    else {
        return true;
    };
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let tol = 1e-12 * scale * scale;
    points
        .iter()
        .all(|p| (ux * (p.y - a.y) - uy * (p.x - a.x)).abs() <= tol)
}

/// Five-point approximation: the four domain corners and the domain center,
/// with heights taken from `truth`. Triangulates to a four-faced pyramid.
pub fn pyramid_samples(truth: &HeightField) -> SamplePointSet {
    let d = *truth.domain();
    let (cx, cy) = d.center();
    let mut points: Vec<Point3<f64>> = d
        .corners()
        .iter()
        .map(|&(x, y)| truth.point_at(x, y))
        .collect();
    points.push(truth.point_at(cx, cy));
    SamplePointSet { points }
}

/// Draws a point on the surface. With `area_weighted`, piecewise-linear
/// surfaces are sampled uniformly by surface area; every other case samples
/// (x, y) uniformly and lifts onto the surface.
pub fn sample_surface_point<R: Rng + ?Sized>(
    field: &HeightField,
    area_weights: Option<&AreaTable>,
    rng: &mut R,
) -> Point3<f64> {
    match (area_weights, field.triangles()) {
        (Some(table), Some(tris)) => {
            let t = &tris[table.pick(rng)];
            let (mut u, mut v) = (rng.random::<f64>(), rng.random::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            let [a, b, c] = t.vertices;
            let p = a + (b - a) * u + (c - a) * v;
            let (x, y) = field.domain.clamp(p.x, p.y);
            Point3::new(x, y, p.z)
        }
        _ => {
            let (x, y) = field.domain.sample_uniform(rng);
            field.point_at(x, y)
        }
    }
}

/// Cumulative surface-area table over the triangles of a piecewise-linear field.
#[derive(Debug, Clone)]
pub struct AreaTable {
    cumulative: Vec<f64>,
}

impl AreaTable {
    pub fn new(field: &HeightField) -> Option<Self> {
        let tris = field.triangles()?;
        let mut acc = 0.0;
        let cumulative = tris
            .iter()
            .map(|t| {
                acc += t.surface_area();
                acc
            })
            .collect();
        Some(Self { cumulative })
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty mesh");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit() -> DomainRect {
        DomainRect::square(1.0).unwrap()
    }

    fn pyramid() -> HeightField {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.5, 0.5, 1.0),
        ];
        build_piecewise_linear(&SamplePointSet::new(pts), &unit()).unwrap()
    }

    #[test]
    fn domain_rejects_inverted_bounds() {
        assert!(DomainRect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(DomainRect::new(0.0, 1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn pyramid_interpolates_vertices_and_edges() {
        let f = pyramid();
        assert_eq!(f.kind(), FieldKind::PiecewiseLinear);
        assert_eq!(f.eval(0.5, 0.5), 1.0);
        for (x, y) in unit().corners() {
            assert_eq!(f.eval(x, y), 0.0);
        }
        assert!((f.eval(0.25, 0.25) - 0.5).abs() < 1e-12);
        assert!((f.eval(0.75, 0.25) - 0.5).abs() < 1e-12);
        assert_eq!(f.triangles().unwrap().len(), 4);
    }

    #[test]
    fn collinear_samples_are_rejected() {
        let pts = (0..5).map(|i| Point3::new(i as f64 * 0.2, i as f64 * 0.2, 1.0)).collect();
        let err = build_piecewise_linear(&SamplePointSet::new(pts), &unit()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSamples));
    }

    #[test]
    fn duplicate_and_sparse_samples_are_rejected() {
        let dup = vec![
            Point3::new(0.1, 0.1, 0.0),
            Point3::new(0.1, 0.1, 1.0),
            Point3::new(0.9, 0.2, 0.0),
        ];
        assert!(matches!(
            build_piecewise_linear(&SamplePointSet::new(dup), &unit()),
            Err(Error::InvalidSamples(_))
        ));
        let two = vec![Point3::new(0.1, 0.1, 0.0), Point3::new(0.5, 0.2, 0.0)];
        assert!(build_piecewise_linear(&SamplePointSet::new(two), &unit()).is_err());
    }

    #[test]
    fn corners_extrapolate_from_nearest_sample() {
        let pts = vec![
            Point3::new(0.2, 0.2, 1.0),
            Point3::new(0.8, 0.2, 2.0),
            Point3::new(0.5, 0.8, 3.0),
        ];
        let f = build_piecewise_linear(&SamplePointSet::new(pts), &unit()).unwrap();
        assert_eq!(f.eval(0.0, 0.0), 1.0);
        assert_eq!(f.eval(1.0, 0.0), 2.0);
        assert_eq!(f.eval(0.5, 1.0 - 1e-12).round(), 3.0);
        assert_eq!(f.eval(0.2, 0.2), 1.0);
    }

    #[test]
    fn single_bump_peaks_at_center() {
        let spec = GaussianMixtureSpec {
            domain: DomainRect::default(),
            components: vec![GaussianBump {
                center: [50.0, 50.0],
                peak: 10.0,
                sigma: 12.0,
            }],
            base: 0.0,
            seed: None,
        };
        let f = generate_terrain(&spec).unwrap();
        assert_eq!(f.eval(50.0, 50.0), 10.0);
        let p = project_to_surface(&f, &Point3::new(50.0, 50.0, 99.0));
        assert_eq!(p, Point3::new(50.0, 50.0, 10.0));
    }

    #[test]
    fn empty_mixture_is_base_everywhere() {
        let spec = GaussianMixtureSpec {
            domain: DomainRect::default(),
            components: vec![],
            base: 3.5,
            seed: None,
        };
        let f = generate_terrain(&spec).unwrap();
        assert_eq!(f.eval(12.0, 80.0), 3.5);
        assert_eq!(f.eval(100.0, 0.0), 3.5);
    }

    #[test]
    fn random_mixture_is_deterministic() {
        let params = TerrainParams::default();
        let a = generate_terrain(&GaussianMixtureSpec::random(DomainRect::default(), &params, 9).unwrap()).unwrap();
        let b = generate_terrain(&GaussianMixtureSpec::random(DomainRect::default(), &params, 9).unwrap()).unwrap();
        assert_eq!(a.sample_nodes(11, 11), b.sample_nodes(11, 11));
        assert_eq!(a.mixture().unwrap().components.len(), 7);
    }

    #[test]
    fn invalid_mixture_is_rejected() {
        let mut spec = GaussianMixtureSpec::random(DomainRect::default(), &TerrainParams::default(), 1).unwrap();
        spec.components[0].sigma = 0.0;
        assert!(generate_terrain(&spec).is_err());
        spec.components[0].sigma = 1.0;
        spec.components[0].center = [120.0, 5.0];
        assert!(generate_terrain(&spec).is_err());
    }

    #[test]
    fn eval_steps_matches_pointwise_eval() {
        let f = generate_terrain(&GaussianMixtureSpec::random(DomainRect::default(), &TerrainParams::default(), 4).unwrap()).unwrap();
        let mut out = vec![0.0; 40];
        f.eval_steps([3.0, 97.0], [2.1, -2.3], &mut out);
        for (k, h) in out.iter().enumerate() {
            let t = (k + 1) as f64;
            let direct = f.eval(3.0 + 2.1 * t, 97.0 - 2.3 * t);
            assert!((h - direct).abs() < 1e-10, "k={k}: {h} vs {direct}");
        }
    }

    #[test]
    fn uniform_samples_lie_on_flat_surface() {
        let f = HeightField::flat(DomainRect::default(), 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample_surface_uniform(&f, 1, &mut rng);
        assert_eq!(s.points[0].z, 5.0);
        let s = sample_surface_uniform(&f, 500, &mut rng);
        assert!(s.validate(f.domain()).is_ok());
    }

    #[test]
    fn uniform_sample_mean_is_centered() {
        let f = HeightField::flat(unit(), 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 10_000;
        let s = sample_surface_uniform(&f, n, &mut rng);
        let mean = s.points.iter().map(|p| p.x).sum::<f64>() / n as f64;
        // Uniform on [0, 1]: std 1/sqrt(12), standard error std/sqrt(n).
        let se = (1.0 / 12.0f64).sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn projection_clamps_outside_points() {
        let f = HeightField::flat(DomainRect::default(), 2.0).unwrap();
        let p = project_to_surface(&f, &Point3::new(-5.0, 140.0, 30.0));
        assert_eq!(p, Point3::new(0.0, 100.0, 2.0));
        assert_eq!(project_to_surface(&f, &p), p);
    }

    #[test]
    fn grid_field_is_bilinear() {
        let f = HeightField::from_grid(unit(), 2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.eval(0.0, 0.0), 0.0);
        assert_eq!(f.eval(1.0, 1.0), 3.0);
        assert!((f.eval(0.5, 0.5) - 1.5).abs() < 1e-12);
        assert!(HeightField::from_grid(unit(), 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn area_weighted_sampling_stays_on_mesh() {
        let f = pyramid();
        let table = AreaTable::new(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = sample_surface_point(&f, Some(&table), &mut rng);
            assert!(unit().contains(p.x, p.y));
            assert!((p.z - f.eval(p.x, p.y)).abs() < 1e-9);
        }
    }

    #[test]
    fn pyramid_helper_has_five_points() {
        let truth = HeightField::flat(DomainRect::default(), 1.0).unwrap();
        let s = pyramid_samples(&truth);
        assert_eq!(s.len(), 5);
        let f = build_piecewise_linear(&s, truth.domain()).unwrap();
        assert_eq!(f.triangles().unwrap().len(), 4);
    }
}
