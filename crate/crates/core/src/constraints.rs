//! Admissible team configurations: domain bounds, an altitude band above the
//! local terrain, and a minimum inter-agent separation.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface::{DomainRect, HeightField};
use crate::visibility::TeamConfiguration;

const MAX_REPAIR_PASSES: usize = 100;

/// Altitude band and separation, independent of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintParams {
    pub h_min: f64,
    pub h_max: f64,
    pub d_sep: f64,
}

impl Default for ConstraintParams {
    fn default() -> Self {
        Self {
            h_min: 2.0,
            h_max: 60.0,
            d_sep: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub h_min: f64,
    pub h_max: f64,
    pub d_sep: f64,
    pub domain: DomainRect,
}

impl ConstraintSpec {
    pub fn new(params: ConstraintParams, domain: DomainRect) -> Result<Self> {
        let spec = Self {
            h_min: params.h_min,
            h_max: params.h_max,
            d_sep: params.d_sep,
            domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.h_min > 0.0 && self.h_min < self.h_max && self.h_max.is_finite()) {
            return Err(Error::param("constraints.h_min", "requires 0 < h_min < h_max"));
        }
        if !(self.d_sep >= 0.0 && self.d_sep.is_finite()) {
            return Err(Error::param("constraints.d_sep", "must be >= 0"));
        }
        Ok(())
    }

    fn altitude_ok(&self, field: &HeightField, p: &Point3<f64>) -> bool {
        let alt = p.z - field.eval(p.x, p.y);
        alt >= self.h_min && alt <= self.h_max
    }
}

/// True iff every agent is inside the domain and within the altitude band,
/// and every pair is at least `d_sep` apart. Bounds are inclusive.
pub fn is_feasible(team: &TeamConfiguration, field: &HeightField, spec: &ConstraintSpec) -> bool {
    let inside = team.positions.iter().all(|p| {
        p.x.is_finite()
            && p.y.is_finite()
            && p.z.is_finite()
            && spec.domain.contains(p.x, p.y)
            && spec.altitude_ok(field, p)
    });
    inside && first_conflict(&team.positions, spec.d_sep).is_none()
}

fn first_conflict(ps: &[Point3<f64>], d_sep: f64) -> Option<(usize, usize)> {
    let d2 = d_sep * d_sep;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            if (ps[i] - ps[j]).norm_squared() < d2 {
                return Some((i, j));
            }
        }
    }
    None
}

fn settle(p: &mut Point3<f64>, field: &HeightField, spec: &ConstraintSpec) {
    let (x, y) = spec.domain.clamp(p.x, p.y);
    p.x = x;
    p.y = y;
    let ground = field.eval(x, y);
    let alt = p.z - ground;
    if !(alt >= spec.h_min) {
        // The rounded sum can land a hair under the band; step up to the
        // first value the feasibility check accepts.
        let mut z = ground + spec.h_min;
        while z - ground < spec.h_min {
            z = z.next_up();
        }
        p.z = z;
    } else if alt > spec.h_max {
        let mut z = ground + spec.h_max;
        while z - ground > spec.h_max {
            z = z.next_down();
        }
        p.z = z;
    }
}

/// Moves a team into the feasible set.
///
/// Positions are clamped to the domain and shifted vertically into the
/// altitude band; agents closer than `d_sep` are then pushed apart
/// horizontally by equal halves. Feasible input is returned unchanged.
pub fn repair(
    team: &TeamConfiguration,
    field: &HeightField,
    spec: &ConstraintSpec,
) -> Result<TeamConfiguration> {
    spec.validate()?;
    let mut ps = team.positions.clone();
    for p in ps.iter_mut() {
        settle(p, field, spec);
    }
    // Aim slightly past d_sep so rounding does not leave pairs a hair short.
    let target = spec.d_sep * (1.0 + 1e-9) + 1e-12;
    for _ in 0..MAX_REPAIR_PASSES {
        let mut moved = false;
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                if (ps[i] - ps[j]).norm_squared() >= spec.d_sep * spec.d_sep {
                    continue;
                }
                moved = true;
                let dz = ps[j].z - ps[i].z;
                let need = (target * target - dz * dz).max(0.0).sqrt();
                let (mut ux, mut uy) = (ps[j].x - ps[i].x, ps[j].y - ps[i].y);
                let dist = ux.hypot(uy);
                if dist > 1e-12 {
                    ux /= dist;
                    uy /= dist;
                } else {
                    // Coincident in the plane: spread along a pair-dependent direction.
                    let angle = (i * 31 + j * 17) as f64 * 2.399_963_229_728_653;
                    ux = angle.cos();
                    uy = angle.sin();
                }
                let push = 0.5 * (need - dist).max(0.0);
                ps[i].x -= ux * push;
                ps[i].y -= uy * push;
                ps[j].x += ux * push;
                ps[j].y += uy * push;
                settle(&mut ps[i], field, spec);
                settle(&mut ps[j], field, spec);
            }
        }
        if !moved {
            return Ok(TeamConfiguration::new(ps));
        }
    }
    if first_conflict(&ps, spec.d_sep).is_none() {
        return Ok(TeamConfiguration::new(ps));
    }
    Err(Error::RepairFailure(format!(
        "could not separate {} agents by {} m within {} passes",
        ps.len(),
        spec.d_sep,
        MAX_REPAIR_PASSES
    )))
}
